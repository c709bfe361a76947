#![allow(dead_code)]

pub mod affordance_oracle;
