pub mod pgm;
pub mod ply;

pub use pgm::{read_frame, read_frame_with_meta, write_frame, write_frame_with_meta, FrameMeta};
pub use ply::{read_cloud, write_cloud};
