pub mod cache;
pub mod codec;
pub mod dataset;
pub mod error;
pub mod flash;
pub mod geometry;
pub mod replay;
pub mod store;
pub mod tree;
pub mod verify;

pub use cache::PageCache;
pub use error::{Error, Result};
pub use geometry::{Point, Polygon};
pub use tree::{BuildParams, Database, DbOptions, Object, ObjectKind, Op, TreeHandle};
