"""APM Kit 异常定义"""

from typing import Any, Dict, List, Optional, Sequence


class ApmKitError(Exception):
    """所有流水线异常的基类"""

    def __init__(self, message: str, **context: Any):
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> Dict[str, Any]:
        """转换为机器可读的错误字典"""
        payload: Dict[str, Any] = {
            "error": type(self).__name__,
            "message": self.message,
        }
        payload.update(self.context)
        return payload


class RasterFormatError(ApmKitError):
    """栅格头文件或数据体不合法"""


class BoundsError(ApmKitError):
    """窗口或坐标越出影像范围"""


class SiteTableError(ApmKitError):
    """站点表不满足约束"""


class BandError(ApmKitError):
    """波段缺失或波段数量不符合要求"""


class AnnulusEmptyError(ApmKitError):
    """某个环带内没有有效像素"""

    def __init__(self, annulus_index: int, site_id: Optional[str] = None):
        message = f"环带 {annulus_index} 内没有有效像素"
        if site_id is not None:
            message = f"站点 {site_id}: {message}"
        super().__init__(message, annulus_index=annulus_index, site_id=site_id)
        self.annulus_index = annulus_index
        self.site_id = site_id


class ModelError(ApmKitError):
    """模型拟合或预测失败"""


class PreconditionError(ApmKitError):
    """调用前置条件不成立"""


class ConfigError(ApmKitError):
    """配置文件或参数不合法"""


class SynthError(ApmKitError):
    """合成数据无法按约束生成"""


class PipelineStageError(ApmKitError):
    """流水线某一阶段失败"""

    def __init__(
        self,
        stage: str,
        cause: BaseException,
        site_ids: Optional[Sequence[str]] = None,
    ):
        ids: List[str] = list(site_ids or [])
        if not ids and isinstance(cause, ApmKitError):
            if cause.context.get("site_id"):
                ids = [str(cause.context["site_id"])]
            elif cause.context.get("site_ids"):
                ids = [str(i) for i in cause.context["site_ids"]]
        super().__init__(
            f"阶段 {stage} 失败: {cause}",
            stage=stage,
            site_ids=ids,
            cause=type(cause).__name__,
        )
        self.stage = stage
        self.site_ids = ids
        self.cause = cause
