"""
APM Kit 模板系统
包含 Jinja2 SVG 模板，用于渲染 ROC 曲线与 AUC-γ 曲线
"""

from .manager import TemplateManager, template_manager

__all__ = ["TemplateManager", "template_manager"]
