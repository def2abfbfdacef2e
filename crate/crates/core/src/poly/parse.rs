use super::Polynomial;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParsePolyError {
    #[error("unexpected character {ch:?} at byte {pos}")]
    Unexpected { ch: char, pos: usize },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("invalid number {0:?}")]
    BadNumber(String),
    #[error("variable x{index} out of range for {nvars} variables")]
    VariableOutOfRange { index: usize, nvars: usize },
    #[error("empty polynomial text")]
    Empty,
    #[error("division by a non-constant at byte {pos}")]
    NonConstantDivisor { pos: usize },
    #[error("division by zero at byte {pos}")]
    DivisionByZero { pos: usize },
}

struct Cursor<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.pos += c.len_utf8();
            } else {
                break;
            }
        }
    }

    fn bump(&mut self) {
        if let Some(c) = self.peek() {
            self.pos += c.len_utf8();
        }
    }

    fn unexpected(&self) -> ParsePolyError {
        match self.peek() {
            Some(ch) => ParsePolyError::Unexpected { ch, pos: self.pos },
            None => ParsePolyError::UnexpectedEnd,
        }
    }

    fn digits(&mut self) -> &'a str {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_digit()) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn number(&mut self) -> Result<f64, ParsePolyError> {
        let start = self.pos;
        self.digits();
        if self.peek() == Some('.') {
            self.pos += 1;
            self.digits();
        }
        if matches!(self.peek(), Some('e') | Some('E')) {
            self.pos += 1;
            if matches!(self.peek(), Some('+') | Some('-')) {
                self.pos += 1;
            }
            if self.digits().is_empty() {
                return Err(ParsePolyError::BadNumber(self.src[start..self.pos].to_string()));
            }
        }
        let text = &self.src[start..self.pos];
        text.parse::<f64>()
            .map_err(|_| ParsePolyError::BadNumber(text.to_string()))
    }
}

impl Polynomial {
    /// Parse polynomial text such as `"3*x1^2*x2 - 0.5*x2"`.
    ///
    /// Variables are `x1 .. xn`. Products use `*`, powers `^` with a
    /// nonnegative integer, and parentheses group. Division is allowed by
    /// constants only, e.g. `x1^3/6`.
    pub fn parse(src: &str, nvars: usize) -> Result<Polynomial, ParsePolyError> {
        let mut cur = Cursor { src, pos: 0 };
        cur.skip_ws();
        if cur.peek().is_none() {
            return Err(ParsePolyError::Empty);
        }
        let out = parse_sum(&mut cur, nvars)?;
        cur.skip_ws();
        if cur.peek().is_some() {
            return Err(cur.unexpected());
        }
        Ok(out)
    }
}

fn parse_sum(cur: &mut Cursor<'_>, nvars: usize) -> Result<Polynomial, ParsePolyError> {
    let mut out = Polynomial::zero(nvars);
    let mut first = true;
    loop {
        cur.skip_ws();
        let sign = match cur.peek() {
            Some('+') => {
                cur.bump();
                1.0
            }
            Some('-') => {
                cur.bump();
                -1.0
            }
            _ if first => 1.0,
            _ => return Ok(out),
        };
        first = false;
        let t = parse_product(cur, nvars)?;
        out = &out + &t.scale(sign);
    }
}

fn parse_product(cur: &mut Cursor<'_>, nvars: usize) -> Result<Polynomial, ParsePolyError> {
    let mut out = parse_power(cur, nvars)?;
    loop {
        cur.skip_ws();
        match cur.peek() {
            Some('*') => {
                cur.bump();
                let f = parse_power(cur, nvars)?;
                out = &out * &f;
            }
            Some('/') => {
                cur.bump();
                let at = cur.pos;
                let d = parse_power(cur, nvars)?;
                if d.degree() > 0 {
                    return Err(ParsePolyError::NonConstantDivisor { pos: at });
                }
                let c = d.constant_term();
                if c == 0.0 {
                    return Err(ParsePolyError::DivisionByZero { pos: at });
                }
                out = out.scale(1.0 / c);
            }
            _ => return Ok(out),
        }
    }
}

fn parse_power(cur: &mut Cursor<'_>, nvars: usize) -> Result<Polynomial, ParsePolyError> {
    let base = parse_atom(cur, nvars)?;
    cur.skip_ws();
    if cur.peek() != Some('^') {
        return Ok(base);
    }
    cur.bump();
    cur.skip_ws();
    let p = cur.digits();
    let power: u32 = p.parse().map_err(|_| cur.unexpected())?;
    let mut out = Polynomial::constant(nvars, 1.0);
    for _ in 0..power {
        out = &out * &base;
    }
    Ok(out)
}

fn parse_atom(cur: &mut Cursor<'_>, nvars: usize) -> Result<Polynomial, ParsePolyError> {
    cur.skip_ws();
    match cur.peek() {
        Some(c) if c.is_ascii_digit() || c == '.' => Ok(Polynomial::constant(nvars, cur.number()?)),
        Some('x') => {
            cur.bump();
            let idx_text = cur.digits();
            let index: usize = idx_text.parse().map_err(|_| cur.unexpected())?;
            if index == 0 || index > nvars {
                return Err(ParsePolyError::VariableOutOfRange { index, nvars });
            }
            Ok(Polynomial::var(nvars, index - 1))
        }
        Some('(') => {
            cur.bump();
            let inner = parse_sum(cur, nvars)?;
            cur.skip_ws();
            if cur.peek() != Some(')') {
                return Err(cur.unexpected());
            }
            cur.bump();
            Ok(inner)
        }
        _ => Err(cur.unexpected()),
    }
}
