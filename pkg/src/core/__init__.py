# 核心数据类型包
