# 初始化包
