pub mod closures;
pub mod corpus;
pub mod memory;
pub mod ownership;
pub mod races;
