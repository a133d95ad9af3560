#![allow(dead_code)]

pub mod bench;
pub mod oracle;
