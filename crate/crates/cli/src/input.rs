//! Line sources and incremental CSV parsing for fit and stream modes.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::path::Path;
use std::thread;
use std::time::{Duration, Instant};

use brsl::io::CsvLayout;
use brsl::{BrslError, Result, Sample};

use crate::config::is_stdin;

pub type Lines = Box<dyn Iterator<Item = io::Result<String>> + Send>;

pub fn open(path: &Path) -> io::Result<Box<dyn Read + Send>> {
    if is_stdin(path) {
        Ok(Box::new(io::stdin()))
    } else {
        Ok(Box::new(File::open(path)?))
    }
}

/// Every line until end of file.
pub fn read_lines(path: &Path) -> io::Result<Lines> {
    Ok(Box::new(BufReader::new(open(path)?).lines()))
}

/// Lines of a file that may still be growing. Iteration ends once a read
/// returns nothing and no complete line has arrived for `idle`.
pub struct Tail<R> {
    reader: BufReader<R>,
    partial: String,
    idle: Duration,
    poll: Duration,
    last_data: Instant,
    done: bool,
}

impl<R: Read> Tail<R> {
    pub fn new(reader: R, idle: Duration) -> Self {
        Self {
            reader: BufReader::new(reader),
            partial: String::new(),
            idle,
            poll: idle.min(Duration::from_millis(25)),
            last_data: Instant::now(),
            done: false,
        }
    }
}

impl<R: Read> Iterator for Tail<R> {
    type Item = io::Result<String>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.reader.read_line(&mut self.partial) {
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
                Ok(0) => {
                    if self.last_data.elapsed() >= self.idle {
                        self.done = true;
                        // A writer that never terminated its last line.
                        if !self.partial.is_empty() {
                            return Some(Ok(std::mem::take(&mut self.partial)));
                        }
                        return None;
                    }
                    thread::sleep(self.poll);
                }
                Ok(_) => {
                    self.last_data = Instant::now();
                    if self.partial.ends_with('\n') {
                        let line = std::mem::take(&mut self.partial);
                        return Some(Ok(line.trim_end_matches(['\n', '\r']).to_string()));
                    }
                }
            }
        }
        None
    }
}

pub fn tail_lines(path: &Path, idle: Duration) -> io::Result<Lines> {
    if is_stdin(path) {
        // Standard input has a real end of stream; no polling needed.
        return read_lines(path);
    }
    Ok(Box::new(Tail::new(File::open(path)?, idle)))
}

/// Parses the header line and returns the layout plus an iterator over the
/// remaining rows. Rows must have strictly increasing `t`.
pub fn samples(mut lines: Lines) -> Result<(CsvLayout, impl Iterator<Item = Result<Sample>> + Send)> {
    let header = lines
        .next()
        .ok_or_else(|| BrslError::Parse("input is empty, expected a header".into()))??;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    let layout = CsvLayout::parse_header(&fields)?;
    let mut last_t = f64::NEG_INFINITY;
    let mut line_no = 1u64;
    let rows = lines.map(move |line| {
        line_no += 1;
        let line = line?;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let sample = layout.parse_row(&fields, line_no)?;
        if sample.timestamp <= last_t {
            return Err(BrslError::Parse(format!(
                "line {line_no}: t = {} is not greater than the previous {last_t}",
                sample.timestamp
            )));
        }
        last_t = sample.timestamp;
        Ok(sample)
    });
    Ok((layout, rows))
}
