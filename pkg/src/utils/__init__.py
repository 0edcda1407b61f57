# 工具模块包
