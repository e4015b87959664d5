# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)
from ucloudnet.tensor import Tensor


class Sample():
    def __init__(self, image:Tensor, mask:Tensor, id:str):
        self.image = image # (1,3,H,W) in [0,1]
        self.mask = mask # (1,1,H,W) in {0,1}
        self.id = id

    def __str__(self):
        return f"Sample({self.id}, {self.image.shape[2]}x{self.image.shape[3]})"
