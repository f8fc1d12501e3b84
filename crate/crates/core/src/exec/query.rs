use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::storage::{Predicate, Schema, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QueryKind {
    Scan,
    Update,
    Insert,
}

impl QueryKind {
    pub fn is_mutator(self) -> bool {
        self != QueryKind::Scan
    }
}

/// The six benchmark query shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Template {
    #[serde(rename = "LOW-S")]
    LowS,
    #[serde(rename = "MOD-S")]
    ModS,
    #[serde(rename = "HIGH-S")]
    HighS,
    #[serde(rename = "LOW-U")]
    LowU,
    #[serde(rename = "HIGH-U")]
    HighU,
    #[serde(rename = "INS")]
    Ins,
}

impl Template {
    pub const ALL: [Template; 6] =
        [Template::LowS, Template::ModS, Template::HighS, Template::LowU, Template::HighU, Template::Ins];

    pub fn kind(self) -> QueryKind {
        match self {
            Template::LowS | Template::ModS | Template::HighS => QueryKind::Scan,
            Template::LowU | Template::HighU => QueryKind::Update,
            Template::Ins => QueryKind::Insert,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Template::LowS => "LOW-S",
            Template::ModS => "MOD-S",
            Template::HighS => "HIGH-S",
            Template::LowU => "LOW-U",
            Template::HighU => "HIGH-U",
            Template::Ins => "INS",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Template {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        Template::ALL
            .into_iter()
            .find(|t| t.as_str() == norm)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown template `{s}`")))
    }
}

/// Predicate on one table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableQuery {
    pub table: String,
    pub predicate: Predicate,
}

impl TableQuery {
    pub fn new(table: impl Into<String>, predicate: Predicate) -> Self {
        TableQuery { table: table.into(), predicate }
    }
}

/// Equi-join between attribute `left` of the first table and `right` of
/// the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JoinSpec {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputMode {
    /// Row count plus the sum of every projected attribute.
    #[default]
    Aggregate,
    /// Projected rows, sorted.
    Rows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SetValue {
    Const(Value),
    Increment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetClause {
    pub attr: usize,
    pub value: SetValue,
}

/// A structured query.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub template: Template,
    pub tables: Vec<TableQuery>,
    pub join: Option<JoinSpec>,
    /// Projected attributes per table.
    pub projection: Vec<Vec<usize>>,
    pub output: OutputMode,
    pub sets: Vec<SetClause>,
    pub rows: Vec<Vec<Value>>,
}

impl Query {
    pub fn scan(template: Template, table: impl Into<String>, predicate: Predicate, projection: Vec<usize>) -> Self {
        Query {
            template,
            tables: vec![TableQuery::new(table, predicate)],
            join: None,
            projection: vec![projection],
            output: OutputMode::Aggregate,
            sets: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn join(left: TableQuery, right: TableQuery, join: JoinSpec, left_proj: Vec<usize>, right_proj: Vec<usize>) -> Self {
        Query {
            template: Template::HighS,
            tables: vec![left, right],
            join: Some(join),
            projection: vec![left_proj, right_proj],
            output: OutputMode::Aggregate,
            sets: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn update(template: Template, table: impl Into<String>, predicate: Predicate, sets: Vec<SetClause>) -> Self {
        Query {
            template,
            tables: vec![TableQuery::new(table, predicate)],
            join: None,
            projection: vec![Vec::new()],
            output: OutputMode::Aggregate,
            sets,
            rows: Vec::new(),
        }
    }

    pub fn insert(table: impl Into<String>, rows: Vec<Vec<Value>>) -> Self {
        Query {
            template: Template::Ins,
            tables: vec![TableQuery::new(table, Predicate::all())],
            join: None,
            projection: vec![Vec::new()],
            output: OutputMode::Aggregate,
            sets: Vec::new(),
            rows,
        }
    }

    pub fn with_output(mut self, output: OutputMode) -> Self {
        self.output = output;
        self
    }

    pub fn kind(&self) -> QueryKind {
        self.template.kind()
    }

    /// Checks the query against the schemas of the tables it names, given
    /// in the same order as `self.tables`.
    pub fn validate(&self, schemas: &[&Schema]) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidQuery(m));
        if self.tables.is_empty() || self.tables.len() > 2 || schemas.len() != self.tables.len() {
            return bad(format!("{} needs one or two tables", self.template));
        }
        if self.projection.len() != self.tables.len() {
            return bad("one projection list per table".into());
        }
        let is_join = self.template == Template::HighS;
        if is_join != (self.tables.len() == 2) || is_join != self.join.is_some() {
            return bad("HIGH-S and only HIGH-S has two tables and exactly one join pair".into());
        }
        for ((tq, schema), proj) in self.tables.iter().zip(schemas).zip(&self.projection) {
            for c in &tq.predicate.conjuncts {
                if c.attr >= schema.arity() {
                    return bad(format!("attribute {} not in `{}`", c.attr, schema.name()));
                }
                if c.lo > c.hi {
                    return bad(format!("empty range [{}, {}] on attribute {}", c.lo, c.hi, c.attr));
                }
            }
            if let Some(a) = proj.iter().find(|a| **a >= schema.arity()) {
                return bad(format!("projected attribute {a} not in `{}`", schema.name()));
            }
        }
        if let Some(j) = self.join {
            if j.left >= schemas[0].arity() || j.right >= schemas[1].arity() {
                return bad("join attribute out of range".into());
            }
        }
        match self.kind() {
            QueryKind::Update => {
                if self.sets.is_empty() {
                    return bad("update without SET clauses".into());
                }
                if let Some(s) = self.sets.iter().find(|s| s.attr >= schemas[0].arity()) {
                    return bad(format!("SET attribute {} out of range", s.attr));
                }
            }
            QueryKind::Insert => {
                for r in &self.rows {
                    schemas[0].validate(r)?;
                }
            }
            QueryKind::Scan => {}
        }
        if self.kind() != QueryKind::Update && !self.sets.is_empty() {
            return bad("SET clauses on a non-update query".into());
        }
        if self.kind() != QueryKind::Insert && !self.rows.is_empty() {
            return bad("row payload on a non-insert query".into());
        }
        Ok(())
    }
}

/// Result of running a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryOutput {
    Aggregate { count: u64, sums: Vec<i128> },
    Rows(Vec<Vec<Value>>),
    Mutation { written: u64 },
}
