# 路径集与条件期望估计包
