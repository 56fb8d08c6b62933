"""APM Kit Logging Configuration"""

import logging
import logging.handlers
from pathlib import Path
from typing import Optional

from .settings import config

ROOT_LOGGER = "apmkit"


class ApmKitLogger:
    """流水线日志管理器

    所有 `apmkit.*` 模块的 logger 都挂在同一个根 logger 下，
    控制台输出简洁格式，文件按天归档。
    """

    def __init__(self, name: str = ROOT_LOGGER, log_dir: Optional[str] = None):
        self.name = name
        self.log_dir = Path(log_dir or config.log_dir)
        self.logger = logging.getLogger(self.name)
        self._configured = False

    def setup(self, console_level: Optional[str] = None, to_files: bool = True) -> logging.Logger:
        """设置日志系统；重复调用会先清掉已有 handler"""
        level = logging.DEBUG if config.debug_mode else getattr(logging, config.log_level, logging.INFO)
        self.logger.setLevel(level)
        self.logger.handlers.clear()
        # 防止重复日志
        self.logger.propagate = False

        self._add_console_handler(console_level or config.log_level)
        if to_files:
            self._add_file_handlers()
        self._set_formatters()
        self._configured = True
        return self.logger

    def _add_console_handler(self, level: str):
        """添加控制台输出（stderr，stdout 留给命令结果）"""
        console_handler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, level.upper(), logging.INFO))
        self.logger.addHandler(console_handler)

    def _rotating(self, filename: str, level: int, backups: int) -> logging.Handler:
        handler = logging.handlers.TimedRotatingFileHandler(
            filename=self.log_dir / filename,
            when="midnight",
            interval=1,
            backupCount=backups,
            encoding="utf-8",
        )
        handler.setLevel(level)
        handler.suffix = "%Y%m%d"
        return handler

    def _add_file_handlers(self):
        """添加文件输出 handlers"""
        self.log_dir.mkdir(parents=True, exist_ok=True)
        self.logger.addHandler(self._rotating("app.log", logging.INFO, 30))
        self.logger.addHandler(self._rotating("error.log", logging.ERROR, 30))
        if config.debug_mode:
            # 调试日志只保留 7 天
            self.logger.addHandler(self._rotating("debug.log", logging.DEBUG, 7))

    def _set_formatters(self):
        """设置日志格式"""
        detailed_formatter = logging.Formatter(
            fmt="%(asctime)s | %(name)s | %(levelname)s | %(filename)s:%(lineno)d | %(funcName)s | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
        simple_formatter = logging.Formatter(
            fmt="%(asctime)s | %(levelname)s | %(message)s", datefmt="%H:%M:%S"
        )
        for handler in self.logger.handlers:
            if isinstance(handler, logging.FileHandler):
                handler.setFormatter(detailed_formatter)
            else:
                handler.setFormatter(simple_formatter)

    def get_logger(self) -> logging.Logger:
        """获取配置好的 logger"""
        return self.logger

    def log_startup(self, command: str = ""):
        """记录启动信息"""
        self.logger.info("=" * 60)
        self.logger.info(f"{config.app_name} v{config.app_version} 启动 {command}".rstrip())
        self.logger.info(f"日志目录: {self.log_dir.absolute()}")
        self.logger.info(f"运行配置: {config.get_config_summary()}")
        self.logger.info("=" * 60)

    def log_shutdown(self):
        """记录关闭信息"""
        self.logger.info("=" * 60)
        self.logger.info(f"{config.app_name} 正在关闭")
        self.logger.info("=" * 60)

    def close(self):
        """关闭并移除所有 handler"""
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)
        self._configured = False


# 全局日志实例
apm_logger = ApmKitLogger()


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """获取 logger 实例"""
    if name:
        return logging.getLogger(f"{ROOT_LOGGER}.{name}")
    return apm_logger.get_logger()


def setup_logging(console_level: Optional[str] = None, to_files: bool = True) -> ApmKitLogger:
    """设置日志系统（供外部调用）"""
    apm_logger.setup(console_level=console_level, to_files=to_files)
    return apm_logger


def log_startup(command: str = ""):
    """记录启动日志"""
    apm_logger.log_startup(command)


def log_shutdown():
    """记录关闭日志"""
    apm_logger.log_shutdown()
