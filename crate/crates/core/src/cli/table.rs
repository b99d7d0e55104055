use serde_json::{Map, Value};

/// Column-named result rows; cells are JSON scalars so CSV and JSON share one
/// deterministic float formatting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn index(&self, name: &str) -> usize {
        self.columns.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column `{name}`"))
    }

    /// Numeric column; null cells (non-finite values) come back as NaN.
    pub fn f64s(&self, name: &str) -> Vec<f64> {
        let i = self.index(name);
        self.rows.iter().map(|r| r[i].as_f64().unwrap_or(f64::NAN)).collect()
    }

    pub fn bools(&self, name: &str) -> Vec<bool> {
        let i = self.index(name);
        self.rows.iter().map(|r| r[i].as_bool().unwrap_or(false)).collect()
    }

    pub fn strings(&self, name: &str) -> Vec<String> {
        let i = self.index(name);
        self.rows.iter().map(|r| cell_text(&r[i])).collect()
    }
}

pub(crate) fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Summary map builder.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Summary(pub Map<String, Value>);

impl Summary {
    pub fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.0.insert(key.to_string(), v.into());
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.0.get(key).and_then(Value::as_f64).unwrap_or(f64::NAN)
    }

    pub fn get(&self, key: &str) -> Option<&Value> {
        self.0.get(key)
    }
}
