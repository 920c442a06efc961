pub mod pose;
pub mod xform;
pub mod puzzle;
pub mod scene;
pub mod io;
pub mod service;
pub mod cli;
