# 参考解：解析解目录与枚举树求解器
