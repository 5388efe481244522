# Valores por defecto de la ejecución
EMBED_DIM = 16
T_ITERS = 2
TOP_N = 3
LEARNING_RATE = 1e-4
BATCH_SIZE = 2
EPOCHS = 100
SEED = 0

# Pesos de la pérdida MAFL
ALPHA = 2.2
BETA = 1.2
GAMMA = 1.0
ETA = 0.3
CONTRAST_WINDOW = 9

# Arquitectura
CHANNELS = 16
DECODER_CHANNELS = 8
DENSE_LAYERS = 3
ROI_SIZE = 2
HEADS = 2
LEAKY_SLOPE = 0.2
CROP_SIZE = 32
REGION_CHANNELS = 4

# Adam
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Métricas
MI_BINS = 256
SSIM_WINDOW = 8
PSNR_PEAK = 255.0
PSNR_SENTINEL = 100.0

# Formatos de fichero
TENSOR_MAGIC = b"MSGT"
MAX_RANK = 32
CHECKPOINT_MAGIC = b"MSGC"
PGM_MAXVAL = 255
MASK_THRESHOLD = 0.5

# Niveles de la anotación: 3 frases de objeto, 1 de región, 1 global
OBJECT_SENTENCES = 3
TIER_TAGS = ("obj", "obj", "obj", "reg", "glob")
