//! CSV emission: comma separated, LF endings, header row always present,
//! floats in scientific notation with 17 significant digits.

use std::fmt::Write as _;

pub enum Cell {
    F(f64),
    U(u64),
    B(bool),
    S(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v as u64)
    }
}

impl From<u8> for Cell {
    fn from(v: u8) -> Self {
        Cell::U(v as u64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

pub fn float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

pub struct Table {
    width: usize,
    buf: String,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table { width: header.len(), buf: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: Vec<Cell>) {
        assert_eq!(cells.len(), self.width, "row width must match header");
        for (i, cell) in cells.into_iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match cell {
                Cell::F(v) => self.buf.push_str(&float(v)),
                Cell::U(v) => write!(self.buf, "{v}").unwrap(),
                Cell::B(v) => self.buf.push_str(if v { "true" } else { "false" }),
                Cell::S(v) => self.buf.push_str(&v),
            }
        }
        self.buf.push('\n');
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { vec![$($crate::csv::Cell::from($x)),*] };
}
