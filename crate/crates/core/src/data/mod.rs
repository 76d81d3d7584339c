//! Dataset ingestion, splitting, normalization, augmentation and merging.

mod augment;
mod batch;
mod index;
mod merge;
mod normalize;
mod record;
pub mod synth;

pub use augment::{geometric_augment, rotate, AugmentPolicy, Transform};
pub use batch::{
    decode_unit_batch, load_rgb, prepare_classifier_batch, resize, to_backbone_range, ImageBatch,
    RangeTag, CLASSIFIER_IMAGE_SIZE, IMAGENET_MEAN, IMAGENET_STD,
};
pub use index::{scan_dataset, split, train_count, DatasetIndex, DEFAULT_TRAIN_RATIO};
pub use merge::{merge_generated, merge_generated_with, MergeOptions, PROVENANCE_FILE};
pub use normalize::{
    denormalize, denormalize_value, normalize_gan, normalize_value, to_unit_signed,
    GAN_IMAGE_SIZE,
};
pub use record::{
    generated_file_name, label_from_file_name, parse_generated_name, ClassSet, ImageFormat,
    ImageRecord, Source, Split, EUROSAT_CLASSES,
};
