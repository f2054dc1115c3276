//! Observation streams: one value per line, or `t,value` with an optional
//! header line.

use std::io::BufRead;

use crate::CliError;

pub struct Observations<R> {
    reader: R,
    line_no: usize,
    seen_data: bool,
    buf: String,
}

impl<R: BufRead> Observations<R> {
    pub fn new(reader: R) -> Self {
        Self {
            reader,
            line_no: 0,
            seen_data: false,
            buf: String::new(),
        }
    }

    /// Next `(line number, value)`, or `None` at end of input.
    pub fn next_value(&mut self) -> Result<Option<(usize, f64)>, CliError> {
        loop {
            self.buf.clear();
            let read = self
                .reader
                .read_line(&mut self.buf)
                .map_err(|e| CliError::Input { line: self.line_no + 1, message: e.to_string() })?;
            if read == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let line = self.buf.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let field = line.rsplit(',').next().unwrap_or(line).trim();
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    self.seen_data = true;
                    return Ok(Some((self.line_no, v)));
                }
                Ok(v) => {
                    return Err(CliError::Input {
                        line: self.line_no,
                        message: format!("non-finite observation {v}"),
                    })
                }
                Err(_) if !self.seen_data && line.chars().any(|c| c.is_ascii_alphabetic()) => {
                    // header line
                    self.seen_data = true;
                    continue;
                }
                Err(_) => {
                    return Err(CliError::Input {
                        line: self.line_no,
                        message: format!("cannot parse {field:?} as a number"),
                    })
                }
            }
        }
    }
}

/// Bits from a string such as `0110 1,0`.
pub fn parse_bits(text: &str) -> Result<Vec<u8>, CliError> {
    text.chars()
        .filter(|c| !c.is_whitespace() && *c != ',')
        .map(|c| match c {
            '0' => Ok(0),
            '1' => Ok(1),
            other => Err(CliError::Usage(format!("--bits accepts only 0 and 1, got {other:?}"))),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(text: &str) -> Result<Vec<(usize, f64)>, CliError> {
        let mut obs = Observations::new(text.as_bytes());
        let mut out = Vec::new();
        while let Some(v) = obs.next_value()? {
            out.push(v);
        }
        Ok(out)
    }

    #[test]
    fn plain_values_and_blank_lines() {
        assert_eq!(all("1.5\n\n-2\n# note\n3e-1\n").unwrap(), vec![(1, 1.5), (3, -2.0), (5, 0.3)]);
    }

    #[test]
    fn csv_with_header() {
        assert_eq!(all("t,value\n1,0.5\n2,1.5\n").unwrap(), vec![(2, 0.5), (3, 1.5)]);
    }

    #[test]
    fn bad_lines_report_numbers() {
        match all("1\n2\nabc\n") {
            Err(CliError::Input { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        match all("1\nNaN\n") {
            Err(CliError::Input { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bit_strings() {
        assert_eq!(parse_bits("01 1,0").unwrap(), vec![0, 1, 1, 0]);
        assert!(parse_bits("012").is_err());
    }
}
