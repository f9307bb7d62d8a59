# SYNTHETIC BENCHMARK CONSTANTS ---------------------------------------------

# Geometry of the desk-scale stand-in for CIFAR-10
BENCH_CLASSES = 4
BENCH_WIDTH = 8
BENCH_HEIGHT = 8
BENCH_CHANNELS = 1
BENCH_TRAIN_PER_CLASS = 200
BENCH_TEST_PER_CLASS = 200
# template deviation from 0.5 is at most BENCH_PATTERN_STRENGTH / 2 < BENCH_EPSILON
BENCH_PATTERN_STRENGTH = 0.12
BENCH_NOISE_STD = 0.05
BENCH_EPSILON = 0.1

# Templates are drawn on a coarse grid and upsampled (low frequency)
TEMPLATE_GRID = 4

# RNG stream ids. Templates and each split draw from disjoint streams.
STREAM_TEMPLATES = 0
STREAM_TRAIN = 1
STREAM_TEST = 2
STREAM_SAMPLING = 3
STREAM_AUGMENT = 4
STREAM_INIT = 5
STREAM_SHUFFLE = 6
STREAM_ASSIGN = 7
STREAM_SPLIT = 8
STREAM_PGD = 9

# Generation schedule
GEN_ROUNDS = 20
GEN_MODEL_EPOCHS_PER_ROUND = 0.2
EMN_STOP_TRAIN_ACCURACY = 0.99

# Desk-scale evaluation schedule
SUPERVISED_EPOCHS = 100
PRETRAIN_EPOCHS = 200
PROBE_EPOCHS = 100
PROBE_LR = 0.1
SUPERVISED_LR = 0.05
PRETRAIN_LR = 0.05
MOMENTUM = 0.9
BATCH_SIZE = 64

# Augmentation used for contrastive views
AUG_CROP_PAD = 1
AUG_FLIP_PROB = 0.5
AUG_JITTER_STD = 0.02

# Second synthetic dataset used as a transfer target
TRANSFER_TARGET_SEED = 1001
