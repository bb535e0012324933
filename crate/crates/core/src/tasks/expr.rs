use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("unexpected character at {0}")]
    Unexpected(usize),
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("division is not exact")]
    InexactDivision,
    #[error("division by zero")]
    DivisionByZero,
    #[error("integer overflow")]
    Overflow,
}

/// Value of an integer arithmetic expression and the literals it uses, in
/// order of appearance.
///
/// Grammar: `expr := term (('+' | '-') term)*`,
/// `term := factor (('*' | '/') factor)*`, `factor := digits | '(' expr ')'`.
/// Operators are left-associative and `*` `/` bind tighter than `+` `-`.
/// Whitespace is ignored. `/` must divide exactly.
pub fn eval_expression(text: &str) -> Result<(i64, Vec<i64>), ExprError> {
    let bytes: Vec<(usize, u8)> = text
        .bytes()
        .enumerate()
        .filter(|(_, b)| !b.is_ascii_whitespace())
        .collect();
    let mut p = Parser {
        src: &bytes,
        at: 0,
        literals: Vec::new(),
    };
    let v = p.expr()?;
    if let Some(&(i, _)) = bytes.get(p.at) {
        return Err(ExprError::Unexpected(i));
    }
    Ok((v, p.literals))
}

struct Parser<'a> {
    src: &'a [(usize, u8)],
    at: usize,
    literals: Vec<i64>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.at).map(|&(_, b)| b)
    }

    fn expr(&mut self) -> Result<i64, ExprError> {
        let mut v = self.term()?;
        while let Some(op @ (b'+' | b'-')) = self.peek() {
            self.at += 1;
            let r = self.term()?;
            v = if op == b'+' { v.checked_add(r) } else { v.checked_sub(r) }
                .ok_or(ExprError::Overflow)?;
        }
        Ok(v)
    }

    fn term(&mut self) -> Result<i64, ExprError> {
        let mut v = self.factor()?;
        while let Some(op @ (b'*' | b'/')) = self.peek() {
            self.at += 1;
            let r = self.factor()?;
            v = if op == b'*' {
                v.checked_mul(r).ok_or(ExprError::Overflow)?
            } else {
                if r == 0 {
                    return Err(ExprError::DivisionByZero);
                }
                if v % r != 0 {
                    return Err(ExprError::InexactDivision);
                }
                v / r
            };
        }
        Ok(v)
    }

    fn factor(&mut self) -> Result<i64, ExprError> {
        match self.src.get(self.at) {
            None => Err(ExprError::UnexpectedEnd),
            Some(&(_, b'(')) => {
                self.at += 1;
                let v = self.expr()?;
                match self.src.get(self.at) {
                    Some(&(_, b')')) => {
                        self.at += 1;
                        Ok(v)
                    }
                    Some(&(i, _)) => Err(ExprError::Unexpected(i)),
                    None => Err(ExprError::UnexpectedEnd),
                }
            }
            Some(&(_, b'0'..=b'9')) => {
                let mut v: i64 = 0;
                while let Some(d @ b'0'..=b'9') = self.peek() {
                    v = v
                        .checked_mul(10)
                        .and_then(|v| v.checked_add((d - b'0') as i64))
                        .ok_or(ExprError::Overflow)?;
                    self.at += 1;
                }
                self.literals.push(v);
                Ok(v)
            }
            Some(&(i, _)) => Err(ExprError::Unexpected(i)),
        }
    }
}
