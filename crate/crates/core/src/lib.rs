//! Deep energy method solver: meshes, quadrature, energy densities, neural
//! trial fields and a linear finite element reference.

pub mod expr;
pub mod mesh;
pub mod quadrature;
pub mod nn;
pub mod dirichlet;
pub mod material;
pub mod problem;
pub mod dem;
pub mod fem;
pub mod results;
