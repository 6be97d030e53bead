//! Bird's-eye-view feature aggregation: the hard reference aggregation and
//! differentiable soft-count proxies with their backward rules.

mod grid;
mod hard;
mod soft;

pub use grid::{channel, FeatureMap, GridSpec, Rect, Region, CHANNELS, CHANNEL_NAMES};
pub use hard::{hard_features, roi_filter};
pub use soft::{
    proxy_error, soft_count, soft_count_backward, soft_count_region, soft_features, soft_features_backward,
    ProxyConfig, ProxyMode, SoftGrid,
};
