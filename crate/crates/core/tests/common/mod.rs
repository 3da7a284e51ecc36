#![allow(dead_code)]

pub mod oracle;
pub mod pool;
pub mod suite;
