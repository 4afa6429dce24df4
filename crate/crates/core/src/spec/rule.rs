use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::document::{decode, named_object, to_named};
use super::{SpecError, END};

/// Guarded edge between two experiments, or from an experiment to the end
/// of the pipeline. An empty condition list always applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct TransitionRule {
    #[serde(skip)]
    pub id: String,
    pub from_experiment: String,
    pub to_experiment: Target,
    #[serde(default)]
    pub conditions: Vec<Condition>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Target {
    Experiment(String),
    End,
}

impl From<String> for Target {
    fn from(s: String) -> Self {
        if s == END {
            Target::End
        } else {
            Target::Experiment(s)
        }
    }
}

impl From<Target> for String {
    fn from(t: Target) -> Self {
        match t {
            Target::Experiment(id) => id,
            Target::End => END.to_string(),
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Experiment(id) => f.write_str(id),
            Target::End => f.write_str(END),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Condition {
    pub left_operand: String,
    pub operator: Operator,
    pub right_operand: Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Operator {
    pub fn is_ordering(self) -> bool {
        matches!(self, Operator::Lt | Operator::Le | Operator::Gt | Operator::Ge)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Operator::Eq => "==",
            Operator::Ne => "!=",
            Operator::Lt => "<",
            Operator::Le => "<=",
            Operator::Gt => ">",
            Operator::Ge => ">=",
        }
    }
}

/// Literal or bound value: a number or a string.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Literal {
    Number(f64),
    Text(String),
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Number(n) => write!(f, "{n}"),
            Literal::Text(s) => write!(f, "{s:?}"),
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.left_operand, self.operator.symbol(), self.right_operand)
    }
}

pub fn parse_transition_rule(document: &str) -> Result<TransitionRule, SpecError> {
    let (id, body) = named_object(document)?;
    TransitionRule::from_body(id, body)
}

impl TransitionRule {
    pub(crate) fn from_body(id: String, body: Value) -> Result<Self, SpecError> {
        let mut rule: TransitionRule = decode(&id, body)?;
        rule.id = id;
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.from_experiment.trim().is_empty() {
            return Err(SpecError::invalid(
                format!("{}.fromExperiment", self.id),
                "fromExperiment must not be empty",
            ));
        }
        if self.from_experiment == END {
            return Err(SpecError::invalid(
                format!("{}.fromExperiment", self.id),
                "\"end\" is reserved and cannot be a source",
            ));
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if c.operator.is_ordering() && !matches!(c.right_operand, Literal::Number(_)) {
                return Err(SpecError::invalid(
                    format!("{}.conditions[{i}].rightOperand", self.id),
                    format!("operator {} requires a numeric right operand", c.operator.symbol()),
                ));
            }
        }
        Ok(())
    }

    pub fn is_unconditional(&self) -> bool {
        self.conditions.is_empty()
    }

    pub fn to_document(&self) -> Value {
        to_named(&self.id, self)
    }
}
