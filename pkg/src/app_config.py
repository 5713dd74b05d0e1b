# App-graph Configuration & Defaults

# --- Relations (fixed id order) ---
RELATION_NAMES = (
    'ADSIMILAR',   # 0 adSupported
    'CRSIMILAR',   # 1 contentRating
    'ECSIMILAR',   # 2 editorsChoice
    'GIDSIMILAR',  # 3 genreId
    'INSSIMILAR',  # 4 installs
    'IAPSIMILAR',  # 5 offersIAP
    'RTGSIMILAR',  # 6 ratings
    'RELSIMILAR',  # 7 released
    'REVSIMILAR',  # 8 reviews
    'STSIMILAR',   # 9 scoreText
    'SSIMILAR',    # 10 size
    'VSIMILAR',    # 11 video
)
RELATION_IDS = {name: i for i, name in enumerate(RELATION_NAMES)}

# Ablation feature groups
ABLATION_GROUPS = {
    'exp1': ('ADSIMILAR', 'ECSIMILAR', 'IAPSIMILAR', 'VSIMILAR'),
    'exp2': ('CRSIMILAR', 'GIDSIMILAR'),
    'exp3': ('RELSIMILAR', 'SSIMILAR'),
    'exp4': ('REVSIMILAR', 'INSSIMILAR', 'STSIMILAR', 'RTGSIMILAR'),
}

# --- Binning ---
CONTENT_RATINGS = ('Everyone', 'Teen', 'Everyone 10+', 'Mature 17+')
CONTENT_RATING_ALIASES = {
    'Everyone10Plus': 'Everyone 10+',
    'Mature17Plus': 'Mature 17+',
}
GENRE_GROUPS = ('PHOTOGRAPHY', 'PRODUCTIVITY', 'GAMES')

QUANTILE_LABELS = {'ratings': 5, 'reviews': 5, 'score_text': 8}

INSTALL_EDGES = (1_000, 100_000, 10_000_000)   # 4 groups
SIZE_EDGES_KB = {
    'text': (1, 20_000, 40_000, 60_000, 80_000, 100_000),  # 7 bins, 0-6
    'table': (1, 20_000, 60_000, 100_000),                 # 5 bins
}
# Days since release. 'text': within month 1..12 + after a year (13 groups)
RELEASED_EDGES_DAYS = {
    'text': tuple(round(30.4375 * m) for m in range(1, 13)),
    'table': (30, 61, 91, 183, 274, 365),                  # 7 groups
}
VARIES_WITH_DEVICE = 'Varies with device'

# --- Graph construction ---
EDGES_PER_RELATION = 1         # k sampled same-bin peers per node per relation
SPLIT_RATIOS = (0.6, 0.2, 0.2)
MIN_SPLIT_TRIPLES = 5

# --- Shallow models ---
KGE_KINDS = ('NTN', 'TransE', 'TransH', 'TransD', 'RESCAL',
             'RotatE', 'ComplEx', 'DistMult', 'SimplE', 'TuckER')
DEFAULT_LOSS_FAMILY = {
    'NTN': 'pairwise_margin', 'TransE': 'pairwise_margin',
    'TransH': 'pairwise_margin', 'TransD': 'pairwise_margin',
    'RESCAL': 'pairwise_margin', 'RotatE': 'pairwise_margin',
    'ComplEx': 'pointwise_logistic', 'DistMult': 'pointwise_logistic',
    'SimplE': 'pointwise_logistic', 'TuckER': 'multiclass',
}
NTN_SLICES = 2
DEFAULT_MARGIN = 1.0
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
CORRUPTION_RETRIES = 32
HITS_AT = (1, 3, 5, 10)

# --- Deep recommender ---
DEEP_DIM = 16
NEIGHBOR_SAMPLE_SIZE = 7
DEEP_DEPTH = 1
DEEP_BATCH_SIZE = 10
DEEP_LR = 0.005
DEEP_L2 = 1e-7
DEEP_EPOCHS = 200
PROB_EPS = 1e-12

REC_K_LIST = (10, 20, 30, 40)
REL_K_LIST = (1, 3, 5, 7)

# --- Checkpoints ---
CHECKPOINT_MAGIC = 'APPGRAPH-CKPT 1'
