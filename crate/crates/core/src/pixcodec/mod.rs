//! Packed 12-bit pixel streams and the cube container.

mod cube;
mod mono12p;

pub use cube::{read_cube, write_cube, write_cube_with, CubeHeader, ImageCube, Modality, Packing};
pub use mono12p::{
    pack_mono12p, packed_len, pixel_count_for_len, u16_from_le_bytes, u16_to_le_bytes,
    unpack_mono12p, Mono12pBuffer,
};
