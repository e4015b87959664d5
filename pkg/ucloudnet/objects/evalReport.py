# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)
from typing import List, Optional, Tuple

from ucloudnet.objects.confusion import Confusion


class EvalReport():
    def __init__(self, confusion:Confusion, precision:float, recall:float, f_measure:float,
            error_rate:float, threshold_used:float=0.5,
            pr_curve:Optional[List[Tuple[float, float, float]]]=None, auc:Optional[float]=None):
        self.confusion = confusion
        self.precision = precision
        self.recall = recall
        self.f_measure = f_measure
        self.error_rate = error_rate
        self.threshold_used = threshold_used
        self.pr_curve = pr_curve # 256 x (threshold, precision, recall)
        self.auc = auc

    def __repr__(self):
        return (f"EvalReport(P={self.precision:.4f}, R={self.recall:.4f}, "
            f"F={self.f_measure:.4f}, error={self.error_rate:.4f})")
