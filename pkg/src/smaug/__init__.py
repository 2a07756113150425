"""SMAUG: sliding multidimensional task-window multi-agent Q-learning.

Self-contained cooperative MARL stack: numpy autodiff core, small
Dec-POMDP environments, windowed subtask recognition with attention
fusion, mutual-information intrinsic rewards, a one-step inference
(world) model, a monotonic mixing network, and the training loop that
ties them together. A FastAPI service and a thin CLI front the
experiment runner.
"""

__version__ = "0.1.0"
