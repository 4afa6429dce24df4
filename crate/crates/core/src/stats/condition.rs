use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::StatsError;
use crate::spec::{Condition, Literal, Operator};

/// Variable bindings visible to transition conditions.
pub type Bindings = BTreeMap<String, Literal>;

/// Evaluates `left op right`. Equality operators compare strings with
/// strings and numbers with numbers; a string and a number are never equal.
/// Ordering operators need a numeric bound value.
pub fn evaluate_condition(condition: &Condition, bindings: &Bindings) -> Result<bool, StatsError> {
    let bound = bindings
        .get(&condition.left_operand)
        .ok_or_else(|| StatsError::UnboundVariable(condition.left_operand.clone()))?;
    let op = condition.operator;
    if op.is_ordering() {
        let (Literal::Number(l), Literal::Number(r)) = (bound, &condition.right_operand) else {
            return Err(StatsError::TypeMismatch(format!(
                "operator {} needs numbers, got {condition} with {} = {bound}",
                op.symbol(),
                condition.left_operand
            )));
        };
        let ord = l.partial_cmp(r);
        return Ok(match op {
            Operator::Lt => ord == Some(Ordering::Less),
            Operator::Le => matches!(ord, Some(Ordering::Less | Ordering::Equal)),
            Operator::Gt => ord == Some(Ordering::Greater),
            Operator::Ge => matches!(ord, Some(Ordering::Greater | Ordering::Equal)),
            Operator::Eq | Operator::Ne => unreachable!(),
        });
    }
    let equal = match (bound, &condition.right_operand) {
        (Literal::Text(l), Literal::Text(r)) => l == r,
        (Literal::Number(l), Literal::Number(r)) => l == r,
        _ => false,
    };
    Ok(if op == Operator::Eq { equal } else { !equal })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cond(op: Operator, right: Literal) -> Condition {
        Condition {
            left_operand: "result-wt-test".into(),
            operator: op,
            right_operand: right,
        }
    }

    fn bind(value: Literal) -> Bindings {
        Bindings::from([("result-wt-test".to_string(), value)])
    }

    #[test]
    fn not_reject() {
        let c = cond(Operator::Ne, Literal::Text("reject".into()));
        assert!(evaluate_condition(&c, &bind(Literal::Text("inconclusive".into()))).unwrap());
        assert!(!evaluate_condition(&c, &bind(Literal::Text("reject".into()))).unwrap());
    }

    #[test]
    fn strict_ordering() {
        let c = Condition {
            left_operand: "x".into(),
            operator: Operator::Lt,
            right_operand: Literal::Number(3.0),
        };
        let b = Bindings::from([("x".to_string(), Literal::Number(3.0))]);
        assert!(!evaluate_condition(&c, &b).unwrap());
        let c = Condition { operator: Operator::Le, ..c };
        assert!(evaluate_condition(&c, &b).unwrap());
    }

    #[test]
    fn errors() {
        let c = cond(Operator::Eq, Literal::Text("reject".into()));
        assert!(matches!(evaluate_condition(&c, &Bindings::new()), Err(StatsError::UnboundVariable(_))));
        let c = cond(Operator::Gt, Literal::Number(1.0));
        assert!(matches!(
            evaluate_condition(&c, &bind(Literal::Text("reject".into()))),
            Err(StatsError::TypeMismatch(_))
        ));
    }

    #[test]
    fn mixed_kinds_are_unequal() {
        let c = cond(Operator::Eq, Literal::Number(1.0));
        assert!(!evaluate_condition(&c, &bind(Literal::Text("1".into()))).unwrap());
        let c = cond(Operator::Ne, Literal::Number(1.0));
        assert!(evaluate_condition(&c, &bind(Literal::Text("1".into()))).unwrap());
    }
}
