"""A small numpy 3D-CNN engine: convolutions with backward passes, the
Pose-SlowOnly and RGBPose-SlowFast networks, training and checks."""

from .budget import count_flops, count_params, count_params_flops
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import conv3d_backward, conv3d_forward, conv_output_shape
from .gradcheck import grad_check, grad_check_report, loss_grad_check
from .layers import (
    BatchNorm3d,
    Conv3d,
    GlobalAvgPool,
    Linear,
    MaxPool3d,
    Module,
    ReLU,
    Sequential,
    retain_activations,
)
from .losses import argmax, cross_entropy, dual_loss, late_fuse, softmax
from .resnet import (
    Bottleneck,
    LateralSpec,
    NetSpec,
    PoseSlowOnly,
    RGBPoseSlowFast,
    StageSpec,
    build_pose_slowonly,
    build_rgbpose_slowfast,
    pose_slowonly_spec,
    rgb_slow_spec,
)
from .tensor import Tensor
from .train import ArrayDataset, History, TrainConfig, evaluate, train
