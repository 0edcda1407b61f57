# 命令行子命令实现
