# 范数估计与不等式检验包
