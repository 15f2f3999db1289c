//! Image containers and the low-level operators shared by every stage:
//! color conversion, Gaussian filtering, pyramids, Horn–Schunck derivatives
//! and connected components.

mod components;
mod filter;
mod frame;
mod gradient;
pub mod io;
mod pyramid;

pub use components::{connected_components, Component, DEFAULT_MIN_AREA};
pub use filter::{
    convolve_separable, edge_map, gaussian_blur, gaussian_kernel, otsu_threshold, sobel_magnitude,
};
pub(crate) use filter::reflect;
pub use frame::{BBox, ColorFrame, Frame};
pub use gradient::{gradients, GradientField};
pub use pyramid::{build_pyramid, check_pyramid_fits, level_side, Pyramid, MIN_LEVEL_SIDE};

pub fn to_grayscale(c: &ColorFrame) -> Frame {
    c.to_grayscale()
}
