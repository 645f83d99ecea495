//! Raw records and image tiles to training tables and resampled splits.

pub mod dataset;
pub mod image;
pub mod records;
pub mod resample;
pub mod synthetic;
pub mod vegetation;
pub mod weather;

pub use dataset::{assemble_dataset, feature_names, Dataset, Standardizer};
pub use image::{load_gray_image, load_image_dir, write_pgm, GrayImage, TILE_SIDE};
pub use records::{parse_records, write_records, FireRecord, ParsedRecords, CAUSE_LIGHTNING};
pub use resample::{random_split, smote, smote_point, undersample, ResampleMethod, SmoteMode, SplitPlan};
pub use vegetation::{encode_vegetation, VegetationMap, VEG_GROUPS};
pub use weather::{aggregate_weather, HourlyObservation, WeatherSeries, WEATHER_COLUMNS};
