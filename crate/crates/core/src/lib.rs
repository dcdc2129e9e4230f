pub mod expr;
pub mod graph;
pub mod model;
pub mod scatter;
pub mod symform;
pub mod sysfile;
pub mod treeform;
pub mod variational;
pub mod wronskian;
