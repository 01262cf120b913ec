//! Paths to the bundled reactor data.
#![allow(dead_code)]

use std::path::PathBuf;

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

pub fn screening() -> PathBuf {
    data("reactor_screening.csv")
}

pub fn followup_2fi() -> PathBuf {
    data("reactor_followup.csv")
}

pub fn followup_3fi() -> PathBuf {
    data("reactor_followup_3fi.csv")
}

pub fn full() -> PathBuf {
    data("reactor_full.csv")
}
