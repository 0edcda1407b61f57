# 求解器包：BSDE 族、Picard 迭代、Fredholm 延拓与驱动
