/// A labelled grid of cells rendered as CSV or markdown.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    pub key: String,
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<String>)>,
}

/// Fixed four-decimal rendering; `-` for an illegal cell.
pub fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

impl Table {
    pub fn new(key: &str, columns: Vec<String>) -> Self {
        Self {
            key: key.to_string(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, label: &str, values: Vec<Option<f64>>) {
        self.push_text(label, values.into_iter().map(cell).collect());
    }

    pub fn push_text(&mut self, label: &str, values: Vec<String>) {
        assert_eq!(values.len(), self.columns.len(), "row width");
        self.rows.push((label.to_string(), values));
    }

    pub fn get(&self, label: &str, column: &str) -> Option<&str> {
        let c = self.columns.iter().position(|x| x == column)?;
        let row = self.rows.iter().find(|(l, _)| l == label)?;
        Some(&row.1[c])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = std::iter::once(&self.key).chain(&self.columns).map(|s| csv_field(s)).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for (label, values) in &self.rows {
            let line: Vec<String> = std::iter::once(label).chain(values).map(|s| csv_field(s)).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let line = |cells: Vec<&str>| format!("| {} |\n", cells.join(" | "));
        out.push_str(&line(std::iter::once(self.key.as_str()).chain(self.columns.iter().map(String::as_str)).collect()));
        out.push_str(&line(vec!["---"; self.columns.len() + 1]));
        for (label, values) in &self.rows {
            out.push_str(&line(std::iter::once(label.as_str()).chain(values.iter().map(String::as_str)).collect()));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders() {
        let mut t = Table::new("strategy", vec!["S=1".into(), "S=2".into()]);
        t.push("a,b", vec![Some(0.5), None]);
        assert_eq!(t.to_csv(), "strategy,S=1,S=2\n\"a,b\",0.5000,-\n");
        assert_eq!(
            t.to_markdown(),
            "| strategy | S=1 | S=2 |\n| --- | --- | --- |\n| a,b | 0.5000 | - |\n"
        );
        assert_eq!(t.get("a,b", "S=2"), Some("-"));
    }
}
