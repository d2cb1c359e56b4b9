//! Textual rule grammar.
//!
//! ```text
//! expr := or
//! or   := and ("||" and)*
//! and  := unary ("&&" unary)*
//! unary := "!" unary | "(" expr ")" | comp
//! comp := "s" INT "~"? OP INT        ("~" reads the moving average)
//! OP   := "<" | ">" | "==" | "<=" | ">=" | "!="
//! ```
//!
//! `!` binds tighter than `&&`, which binds tighter than `||`.
//! Whitespace is insignificant. Sensor ids start at 1 (0 is the reserved
//! "no sensor" sentinel); constants must fit the 16-bit value width.

use crate::model::{OpCode, SensorId};

use super::expr::{BoolExpr, Comparison, Operator};

/// Error produced when rule text does not match the grammar.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {pos}: {message}")]
pub struct ParseError {
    /// Byte offset of the error in the input.
    pub pos: usize,
    /// Human-readable description.
    pub message: String,
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            pos: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(token.as_bytes()) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn integer(&mut self, what: &str) -> Result<u64, ParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.pos == start {
            return self.err(format!("expected {what}"));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .expect("digits are utf8")
            .parse::<u64>()
            .map_err(|_| ParseError {
                pos: start,
                message: format!("{what} out of range"),
            })
    }

    fn comparison(&mut self) -> Result<BoolExpr, ParseError> {
        if !self.eat("s") {
            return self.err("expected a sensor reference like s1");
        }
        let id = self.integer("sensor id")?;
        if id == 0 {
            return self.err("sensor id must be >= 1 (0 is reserved)");
        }
        let id = u32::try_from(id).map_err(|_| ParseError {
            pos: self.pos,
            message: "sensor id out of range".to_owned(),
        })?;
        let source = if self.eat("~") {
            OpCode::MovingAverage
        } else {
            OpCode::Latest
        };
        // Two-character operators first.
        let op = if self.eat("<=") {
            Operator::Le
        } else if self.eat(">=") {
            Operator::Ge
        } else if self.eat("==") {
            Operator::Eq
        } else if self.eat("!=") {
            Operator::Ne
        } else if self.eat("<") {
            Operator::Lt
        } else if self.eat(">") {
            Operator::Gt
        } else {
            return self.err("expected a comparison operator (< > == <= >= !=)");
        };
        let constant = self.integer("comparison constant")?;
        let constant = u16::try_from(constant).map_err(|_| ParseError {
            pos: self.pos,
            message: "comparison constant exceeds the 16-bit value width".to_owned(),
        })?;
        Ok(BoolExpr::Leaf(Comparison {
            sensor: SensorId(id),
            op,
            constant,
            source,
        }))
    }

    fn unary(&mut self) -> Result<BoolExpr, ParseError> {
        match self.peek() {
            Some(b'!') if !self.src[self.pos..].starts_with(b"!=") => {
                self.pos += 1;
                Ok(BoolExpr::negate(self.unary()?))
            }
            Some(b'(') => {
                self.pos += 1;
                let inner = self.or()?;
                if !self.eat(")") {
                    return self.err("expected ')'");
                }
                Ok(inner)
            }
            _ => self.comparison(),
        }
    }

    fn and(&mut self) -> Result<BoolExpr, ParseError> {
        let mut left = self.unary()?;
        loop {
            self.skip_ws();
            if self.src[self.pos..].starts_with(b"&&") {
                self.pos += 2;
                let right = self.unary()?;
                left = BoolExpr::and(left, right);
            } else {
                return Ok(left);
            }
        }
    }

    fn or(&mut self) -> Result<BoolExpr, ParseError> {
        let mut left = self.and()?;
        loop {
            self.skip_ws();
            if self.src[self.pos..].starts_with(b"||") {
                self.pos += 2;
                let right = self.and()?;
                left = BoolExpr::or(left, right);
            } else {
                return Ok(left);
            }
        }
    }
}

/// Parse rule text into an expression tree.
pub fn parse_expr(text: &str) -> Result<BoolExpr, ParseError> {
    let mut p = Parser {
        src: text.as_bytes(),
        pos: 0,
    };
    let expr = p.or()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return p.err("unexpected trailing input");
    }
    Ok(expr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(id: u32) -> SensorId {
        SensorId(id)
    }

    fn leaf(id: u32, op: Operator, k: u16) -> BoolExpr {
        BoolExpr::leaf(Comparison::latest(s(id), op, k))
    }

    #[test]
    fn parses_disjunction_conjunction_example() {
        let e = parse_expr("(s1<50 || s2>25) && (s3==10)").unwrap();
        assert_eq!(
            e,
            BoolExpr::and(
                BoolExpr::or(leaf(1, Operator::Lt, 50), leaf(2, Operator::Gt, 25)),
                leaf(3, Operator::Eq, 10)
            )
        );
    }

    #[test]
    fn parses_moving_average_marker() {
        let e = parse_expr("(s1~>=50) && (s2>=50)").unwrap();
        assert_eq!(
            e,
            BoolExpr::and(
                BoolExpr::leaf(Comparison::moving_average(s(1), Operator::Ge, 50)),
                leaf(2, Operator::Ge, 50)
            )
        );
    }

    #[test]
    fn and_binds_tighter_than_or() {
        let e = parse_expr("s1<1 && s2<2 || s3<3").unwrap();
        assert_eq!(
            e,
            BoolExpr::or(
                BoolExpr::and(leaf(1, Operator::Lt, 1), leaf(2, Operator::Lt, 2)),
                leaf(3, Operator::Lt, 3)
            )
        );
    }

    #[test]
    fn bang_binds_tighter_than_and() {
        let e = parse_expr("!s1<5 && s2>1").unwrap();
        assert_eq!(
            e,
            BoolExpr::and(
                BoolExpr::negate(leaf(1, Operator::Lt, 5)),
                leaf(2, Operator::Gt, 1)
            )
        );
    }

    #[test]
    fn bang_of_group_and_nested_bang() {
        assert_eq!(
            parse_expr("!(s1<5 || s2>1)").unwrap(),
            BoolExpr::negate(BoolExpr::or(
                leaf(1, Operator::Lt, 5),
                leaf(2, Operator::Gt, 1)
            ))
        );
        assert_eq!(
            parse_expr("!!s1<5").unwrap(),
            BoolExpr::negate(BoolExpr::negate(leaf(1, Operator::Lt, 5)))
        );
    }

    #[test]
    fn all_operators_parse() {
        for (text, op) in [
            ("s1<9", Operator::Lt),
            ("s1>9", Operator::Gt),
            ("s1==9", Operator::Eq),
            ("s1<=9", Operator::Le),
            ("s1>=9", Operator::Ge),
            ("s1!=9", Operator::Ne),
        ] {
            assert_eq!(parse_expr(text).unwrap(), leaf(1, op, 9), "{text}");
        }
    }

    #[test]
    fn whitespace_is_insignificant() {
        assert_eq!(
            parse_expr("  s1  <  50  ").unwrap(),
            parse_expr("s1<50").unwrap()
        );
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "",
            "s0<5",
            "s1",
            "s1<",
            "s1 ? 5",
            "x1<5",
            "(s1<5",
            "s1<5)",
            "s1<5 &&",
            "s1<5 s2<5",
            "s1<70000",
            "s1<5 || ",
            "~s1<5",
        ] {
            assert!(parse_expr(bad).is_err(), "{bad:?} should not parse");
        }
        // Errors carry a position.
        let err = parse_expr("s1<5 && x").unwrap_err();
        assert_eq!(err.pos, 8);
    }

    fn arb_expr() -> impl Strategy<Value = BoolExpr> {
        let op = prop_oneof![
            Just(Operator::Lt),
            Just(Operator::Gt),
            Just(Operator::Eq),
            Just(Operator::Le),
            Just(Operator::Ge),
            Just(Operator::Ne),
        ];
        let leaf = (1u32..5, op, any::<u16>(), any::<bool>()).prop_map(|(id, op, k, avg)| {
            BoolExpr::Leaf(Comparison {
                sensor: SensorId(id),
                op,
                constant: k,
                source: if avg { OpCode::MovingAverage } else { OpCode::Latest },
            })
        });
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(BoolExpr::negate),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| BoolExpr::and(a, b)),
                (inner.clone(), inner).prop_map(|(a, b)| BoolExpr::or(a, b)),
            ]
        })
    }

    proptest! {
        /// Rendering an expression and parsing it back is the identity.
        #[test]
        fn display_parse_round_trip(e in arb_expr()) {
            let text = e.to_string();
            let parsed = parse_expr(&text).unwrap();
            prop_assert_eq!(parsed, e);
        }
    }
}
