//! Loss-trace CSV input.

use crate::errors::FormatError;

/// Parses one loss per line. Blank lines and `#` comments are skipped; the
/// first content line may be the header `loss`.
pub fn parse_losses(text: &str) -> Result<Vec<f64>, FormatError> {
    let mut losses = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let first = !seen_content;
        seen_content = true;
        if first && line.eq_ignore_ascii_case("loss") {
            continue;
        }
        let value: f64 = line
            .parse()
            .map_err(|_| FormatError(format!("line {}: {line:?} is not a number", idx + 1)))?;
        if !value.is_finite() || value < 0.0 {
            return Err(FormatError(format!(
                "line {}: loss {value} must be finite and non-negative",
                idx + 1
            )));
        }
        losses.push(value);
    }
    if losses.is_empty() {
        return Err(FormatError("loss file contains no values".into()));
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_comments_and_blanks() {
        let text = "# golden\nloss\n3\n\n5.0\n 3 \n";
        assert_eq!(parse_losses(text).unwrap(), [3.0, 5.0, 3.0]);
    }

    #[test]
    fn bad_line_is_reported_by_number() {
        let err = parse_losses("loss\n3\nfive\n").unwrap_err();
        assert!(err.0.starts_with("line 3:"), "{}", err.0);
        let err = parse_losses("1\n-2\n").unwrap_err();
        assert!(err.0.starts_with("line 2:"));
        let err = parse_losses("1\nnan\n").unwrap_err();
        assert!(err.0.starts_with("line 2:"));
    }

    #[test]
    fn header_only_in_first_position() {
        assert!(parse_losses("3\nloss\n").is_err());
        assert!(parse_losses("loss\n").is_err());
    }
}
