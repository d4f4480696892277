pub mod config;
pub mod domain;
pub mod error;
pub mod fitting;
pub mod models;
pub mod oracle;
pub mod quadrature;
pub mod report;
pub mod scan_io;
pub mod special;
pub mod synth;
pub mod verify;
