# 表达式 DSL 包
