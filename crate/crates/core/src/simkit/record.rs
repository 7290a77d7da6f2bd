use std::io::Write;

use crate::error::{Error, Result};

/// Recorded samples: one time column plus named value columns.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    names: Vec<String>,
    t: Vec<f64>,
    rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(names: Vec<String>) -> Self {
        TimeSeries {
            names,
            t: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, t: f64, row: Vec<f64>) -> Result<()> {
        if row.len() != self.names.len() {
            return Err(Error::contract(format!(
                "row has {} values for {} columns",
                row.len(),
                self.names.len()
            )));
        }
        self.t.push(t);
        self.rows.push(row);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[f64])> {
        self.t.iter().copied().zip(self.rows.iter().map(|r| r.as_slice()))
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.column_index(name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// Value of `name` at the last recorded time `<= t`.
    pub fn value_at(&self, name: &str, t: f64) -> Option<f64> {
        let k = self.column_index(name)?;
        let idx = self.t.iter().rposition(|&ti| ti <= t + 1e-12)?;
        Some(self.rows[idx][k])
    }

    pub fn last(&self, name: &str) -> Option<f64> {
        let k = self.column_index(name)?;
        self.rows.last().map(|r| r[k])
    }

    /// Keep only the named columns (in the given order).
    pub fn select(&self, names: &[String]) -> Result<TimeSeries> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.column_index(n)
                    .ok_or_else(|| Error::config(format!("unknown output column `{n}`")))
            })
            .collect::<Result<_>>()?;
        Ok(TimeSeries {
            names: names.to_vec(),
            t: self.t.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| idx.iter().map(|&k| r[k]).collect())
                .collect(),
        })
    }

    /// CSV with header `t,<col1>,...`; every value printed with 17
    /// significant digits; each row newline-terminated.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "t")?;
        for n in &self.names {
            write!(w, ",{n}")?;
        }
        writeln!(w)?;
        for (t, row) in self.rows() {
            write!(w, "{}", fmt17(t))?;
            for v in row {
                write!(w, ",{}", fmt17(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is ascii")
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut ts = TimeSeries::new(vec!["a".into(), "b".into()]);
        ts.push(0.0, vec![1.0, -0.1]).unwrap();
        ts.push(0.5, vec![2.0, 1.0 / 3.0]).unwrap();
        let csv = ts.to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,a,b");
        assert_eq!(lines[1], "0.0000000000000000e0,1.0000000000000000e0,-1.0000000000000001e-1");
        assert!(csv.ends_with('\n'));
        let third: f64 = lines[2].split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(third, 1.0 / 3.0);
    }

    #[test]
    fn push_checks_width() {
        let mut ts = TimeSeries::new(vec!["a".into()]);
        assert!(ts.push(0.0, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn select_and_lookup() {
        let mut ts = TimeSeries::new(vec!["a".into(), "b".into()]);
        for k in 0..5 {
            ts.push(k as f64, vec![k as f64, 10.0 * k as f64]).unwrap();
        }
        assert_eq!(ts.value_at("b", 2.5), Some(20.0));
        let only_b = ts.select(&["b".to_string()]).unwrap();
        assert_eq!(only_b.names(), &["b".to_string()]);
        assert!(ts.select(&["zzz".to_string()]).is_err());
    }
}
