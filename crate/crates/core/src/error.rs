use thiserror::Error;

/// Errors raised by the augmentation, curriculum and simulation layers.
///
/// File-format problems live in [`crate::tbf::TbfError`]; this type covers
/// everything that is wrong with the *values* handed to an operation.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("patch size {patch} does not divide image height {height} and width {width}")]
    Divisibility {
        patch: usize,
        height: usize,
        width: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("structural error: {0}")]
    Structural(String),

    #[error("{name} = {value} is outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid value: {0}")]
    Invalid(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}
