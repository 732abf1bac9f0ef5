#![allow(dead_code)]

pub mod intent_cases;
pub mod oracles;
