"""APM Kit Data Models Package"""

from .raster import (
    KTT_BANDS,
    NDVI_BAND,
    SLOPE_BAND,
    WORLDVIEW2_BANDS,
    WORLDVIEW2_WAVELENGTHS,
    MultiBandImage,
    RasterHeader,
    Site,
    SiteTable,
)
from .features import AnnulusOffsets, FeatureMatrix, RadiiTable, feature_column_labels
from .apm import (
    MODEL_VERSION,
    ConstantModel,
    KnnModel,
    LdaModel,
    LoocvResult,
    PcaModel,
    TrainedApm,
)
from .evaluation import (
    CONVENTIONAL_LEVELS,
    GammaSelection,
    RocCurve,
    ScorePair,
    ScoreTable,
)
from .synth import SynthConfig
from .bands import BAND_CONFIGURATIONS, BandSet, KttCoefficients

__all__ = [
    "KTT_BANDS",
    "NDVI_BAND",
    "SLOPE_BAND",
    "WORLDVIEW2_BANDS",
    "WORLDVIEW2_WAVELENGTHS",
    "MultiBandImage",
    "RasterHeader",
    "Site",
    "SiteTable",
    "AnnulusOffsets",
    "FeatureMatrix",
    "RadiiTable",
    "feature_column_labels",
    "MODEL_VERSION",
    "ConstantModel",
    "KnnModel",
    "LdaModel",
    "LoocvResult",
    "PcaModel",
    "TrainedApm",
    "CONVENTIONAL_LEVELS",
    "GammaSelection",
    "RocCurve",
    "ScorePair",
    "ScoreTable",
    "SynthConfig",
    "BAND_CONFIGURATIONS",
    "BandSet",
    "KttCoefficients",
]
