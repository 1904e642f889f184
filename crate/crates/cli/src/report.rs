use std::path::Path;

use almostq::membership::solver_settings;
use almostq::Settings;
use anyhow::Context;
use serde::Serialize;

/// One computed number, optionally checked against a reference.
#[derive(Debug, Serialize)]
pub struct Item {
    pub name: String,
    pub computed: Option<f64>,
    pub reference: Option<f64>,
    /// Human-readable pass condition.
    pub criterion: String,
    /// `None` for rows that are printed for comparison only.
    pub pass: Option<bool>,
}

impl Item {
    pub fn check(
        name: impl Into<String>,
        computed: f64,
        reference: Option<f64>,
        criterion: impl Into<String>,
        pass: bool,
    ) -> Self {
        Self { name: name.into(), computed: Some(computed), reference, criterion: criterion.into(), pass: Some(pass) }
    }

    pub fn info(
        name: impl Into<String>,
        computed: Option<f64>,
        reference: Option<f64>,
        note: impl Into<String>,
    ) -> Self {
        Self { name: name.into(), computed, reference, criterion: note.into(), pass: None }
    }
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub settings: Settings,
    pub parameters: serde_json::Value,
    pub items: Vec<Item>,
    pub passed: bool,
}

impl Report {
    pub fn new(command: impl Into<String>, parameters: serde_json::Value) -> Self {
        Self {
            tool: "almostq",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            settings: solver_settings(),
            parameters,
            items: Vec::new(),
            passed: true,
        }
    }

    pub fn push(&mut self, item: Item) {
        if item.pass == Some(false) {
            self.passed = false;
        }
        self.items.push(item);
    }

    pub fn print(&self) {
        println!("{} {} {}", self.tool, self.version, self.command);
        for item in &self.items {
            let tag = match item.pass {
                Some(true) => "PASS",
                Some(false) => "FAIL",
                None => "INFO",
            };
            let computed = item.computed.map_or("-".to_string(), |v| format!("{v:.9}"));
            let reference = item.reference.map_or(String::new(), |v| format!("  reference {v}"));
            println!("{tag}  {:<40} {computed}{reference}  [{}]", item.name, item.criterion);
        }
        println!("{}", if self.passed { "all checks passed" } else { "some checks failed" });
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }
}
