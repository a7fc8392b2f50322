"""
ATLAS SMR 工具设置模板

使用步骤:
1. 复制此文件为 config.py: cp config.example.py config.py
2. 取消注释并修改需要的设置

或者使用环境变量:
    export ATLAS_SMR_OUTPUT_DIR="./output"
    export ATLAS_SMR_VERBOSE="true"
    export ATLAS_SMR_WORKERS="4"
    export ATLAS_SMR_LIN_BUDGET="200000"
    export ATLAS_SMR_BUCKET_MS="10"

注意: 这些设置只影响输出位置和检查方式，不影响模拟结果。
模拟参数写在 JSON 文件中（参考 config/sim.example.json）。
"""

# 默认输出目录
# OUTPUT_DIR = "./output"

# CSV 编码（默认带 BOM，Excel 友好）
# CSV_ENCODING = "utf-8-sig"

# 扫参并行进程数
# SWEEP_WORKERS = 4

# 线性化搜索的状态上限（每个 key）
# LIN_SEARCH_BUDGET = 200000

# 提交延迟直方图桶宽（虚拟毫秒）
# HISTOGRAM_BUCKET_MS = 10

# 是否打印详细日志
# VERBOSE = True
