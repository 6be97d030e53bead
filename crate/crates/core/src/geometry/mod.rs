//! Meshes, rigid poses, primitive generation and displacement regularizers.

mod io;
mod mesh;
mod pose;
mod primitives;
mod regularizers;
mod vec3;

pub use io::{read_obj, write_obj, write_stl, parse_obj, obj_string, stl_bytes};
pub use mesh::{Adjacency, TriangleMesh};
pub use pose::{Pose, RigidTransform};
pub use primitives::{make_box, make_cylinder, make_primitive, PrimitiveKind};
pub use regularizers::{l2_loss, laplacian_loss, Displacement};
pub use vec3::Vec3;
