"""
SVG 图表模板管理
每个图表对应一个 `<chart>.svg.j2`，编译后的模板按图表名缓存
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional

from jinja2 import Environment, FileSystemLoader, StrictUndefined, Template, TemplateError

from ..core.errors import ApmKitError

logger = logging.getLogger(__name__)

SVG_SUFFIX = ".svg.j2"


class TemplateManager:
    """按图表名渲染 SVG"""

    def __init__(self, templates_dir: Optional[Path] = None):
        self.templates_dir = Path(templates_dir or Path(__file__).parent)
        self.jinja_env = Environment(
            loader=FileSystemLoader(str(self.templates_dir)),
            autoescape=True,  # 图例与标题写进 XML
            trim_blocks=True,
            lstrip_blocks=True,
            keep_trailing_newline=True,
            undefined=StrictUndefined,
        )
        self._charts: Dict[str, Template] = {}

    def charts(self) -> List[str]:
        """可用的图表名"""
        return sorted(p.name[: -len(SVG_SUFFIX)] for p in self.templates_dir.glob(f"*{SVG_SUFFIX}"))

    def _compiled(self, chart: str) -> Template:
        if chart not in self._charts:
            self._charts[chart] = self.jinja_env.get_template(f"{chart}{SVG_SUFFIX}")
            logger.debug(f"SVG 模板 {chart} 已编译")
        return self._charts[chart]

    def render_svg(self, chart: str, **context) -> str:
        """渲染图表；模板缺失或上下文缺字段时抛出 ApmKitError"""
        try:
            return self._compiled(chart).render(**context)
        except TemplateError as e:
            logger.error(f"SVG 图表 {chart} 渲染失败: {e}")
            raise ApmKitError(f"SVG 图表 {chart} 渲染失败: {e}", chart=chart) from e


# 全局模板管理器实例
template_manager = TemplateManager()
