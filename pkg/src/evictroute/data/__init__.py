from .features import (
    FEATURE_SETS,
    LabeledDataset,
    OwnershipIndex,
    attorney_flags_by_owner,
    base_rate,
    build_dataset,
    feature_columns,
    owner_attorney_flags,
    rank_attorneys,
)
from .io import admit_properties, load_dataset_dir, load_filings, load_neighborhoods, load_owner_tenures, load_properties
from .records import (
    EvictionFiling,
    GeoPoint,
    NeighborhoodAttributes,
    OwnerProfile,
    OwnerTenure,
    PeriodWindow,
    PropertyRecord,
    ValidationError,
)
from .synthetic import RiskCoefficients, SyntheticConfig, SyntheticWorld, generate_synthetic
