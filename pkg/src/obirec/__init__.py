"""Two-stage glyph recognition: grid detection plus crop classification."""

from .classify import ClassPrediction, predict_crop, preprocess_crop
from .detect import (
    BBox,
    Detection,
    LetterboxTransform,
    decode_yolo,
    detect,
    iou,
    letterbox,
    nms,
    unletterbox,
)
from .evaluate import (
    GroundTruthBox,
    MetricsReport,
    average_precision,
    evaluate_dataset,
    f1,
    map_at_iou,
    match_detections,
    precision,
    recall,
)
from .network import (
    LoadedNetwork,
    NetworkSpec,
    WeightFormatError,
    build_mobilenet_v1,
    build_yolov3_tiny,
    count_flops,
    count_params,
    forward,
    load_darknet_weights,
    model_volume_bytes,
    random_weights,
    save_weights,
    zero_weights,
)
from .tensor import (
    BatchNormParams,
    ConvParams,
    Tensor,
    concat_channels,
    conv2d,
    depthwise_separable,
    global_avg_pool,
    leaky_relu,
    maxpool,
    relu6,
    softmax,
    upsample_nearest,
)

__version__ = "0.1.0"
