use std::fmt;

use cellmix_core::tbf::TbfError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_FORMAT: i32 = 3;
pub const EXIT_DOMAIN: i32 = 4;

/// Missing or contradictory command-line input.
#[derive(Debug)]
pub struct UsageError(pub String);

/// Unreadable or malformed input files (config, loss CSV, PNG).
#[derive(Debug)]
pub struct FormatError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}
impl std::error::Error for FormatError {}

/// Maps an error chain onto the documented exit codes.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(tbf) = cause.downcast_ref::<TbfError>() {
            return match tbf {
                TbfError::Content(_) => EXIT_DOMAIN,
                _ => EXIT_FORMAT,
            };
        }
        if cause.is::<FormatError>() || cause.is::<std::io::Error>() {
            return EXIT_FORMAT;
        }
        if cause.is::<cellmix_core::Error>() {
            return EXIT_DOMAIN;
        }
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification() {
        let e = anyhow::Error::new(UsageError("x".into()));
        assert_eq!(exit_code(&e), EXIT_USAGE);
        let e = anyhow::Error::new(TbfError::UnknownKind(7)).context("reading a.tbf");
        assert_eq!(exit_code(&e), EXIT_FORMAT);
        let e = anyhow::Error::new(cellmix_core::Error::Invalid("bad".into()));
        assert_eq!(exit_code(&e), EXIT_DOMAIN);
        let e = anyhow::Error::new(FormatError("line 3".into()));
        assert_eq!(exit_code(&e), EXIT_FORMAT);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }
}
