//! Homographies, points and images, plus the warps shared by every other module.

mod homography;
mod image;

pub use homography::{compose, invert, warp_point, Homography, Point2};
pub use image::{warp_image, ImageBuffer, Mask, WarpedImage};
