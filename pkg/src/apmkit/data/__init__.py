"""APM Kit 包内数据文件"""
