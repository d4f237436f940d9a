use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::{DiagCategory, ParseDiag, Span};
use crate::value::parse_date_days;

/// Words that cannot serve as implicit aliases.
const RESERVED: [&str; 40] = [
    "select", "from", "where", "group", "by", "having", "order", "limit", "offset", "join", "left", "right",
    "full", "inner", "outer", "cross", "on", "as", "and", "or", "not", "in", "like", "between", "union",
    "intersect", "except", "with", "distinct", "asc", "desc", "is", "null", "exists", "case", "when", "then",
    "else", "end", "over",
];

/// Parses one statement into a syntax tree.
pub fn parse_query(sql: &str) -> Result<Query, ParseDiag> {
    let mut p = Parser {
        toks: tokenize(sql)?,
        pos: 0,
    };
    let q = p.query()?;
    p.eat_sym(";");
    if !p.at_eof() {
        return Err(p.unexpected("end of statement"));
    }
    Ok(q)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn peek_at(&self, n: usize) -> &Tok {
        &self.toks[(self.pos + n).min(self.toks.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.toks[self.pos].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos < self.toks.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(w) if w == kw)
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseDiag> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(self.unexpected(&kw.to_ascii_uppercase()))
        }
    }

    fn is_sym(&self, s: &str) -> bool {
        matches!(self.peek(), Tok::Sym(x) if *x == s)
    }

    fn eat_sym(&mut self, s: &str) -> bool {
        if self.is_sym(s) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, s: &str) -> Result<(), ParseDiag> {
        if self.eat_sym(s) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("'{s}'")))
        }
    }

    fn describe(t: &Tok) -> String {
        match t {
            Tok::Ident(w) => format!("'{w}'"),
            Tok::Int(v) => format!("number {v}"),
            Tok::Float(v) => format!("number {v}"),
            Tok::Str(s) => format!("string '{s}'"),
            Tok::Sym(s) => format!("'{s}'"),
            Tok::Eof => "end of input".to_string(),
        }
    }

    fn unexpected(&self, wanted: &str) -> ParseDiag {
        ParseDiag::new(
            self.span(),
            DiagCategory::Syntax,
            format!("expected {wanted}, found {}", Self::describe(self.peek())),
        )
    }

    fn unsupported(&self, what: &str) -> ParseDiag {
        ParseDiag::new(self.span(), DiagCategory::Unsupported, what.to_string())
    }

    fn ident(&mut self) -> Result<String, ParseDiag> {
        match self.peek().clone() {
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => {
                self.bump();
                Ok(w)
            }
            _ => Err(self.unexpected("identifier")),
        }
    }

    fn unsigned(&mut self) -> Result<u64, ParseDiag> {
        match self.peek().clone() {
            Tok::Int(v) if v >= 0 => {
                self.bump();
                Ok(v as u64)
            }
            _ => Err(self.unexpected("non-negative integer")),
        }
    }

    fn query(&mut self) -> Result<Query, ParseDiag> {
        let mut with = Vec::new();
        if self.eat_kw("with") {
            if self.is_kw("recursive") {
                return Err(self.unsupported("recursive WITH"));
            }
            loop {
                let name = self.ident()?;
                self.expect_kw("as")?;
                self.expect_sym("(")?;
                let query = self.query()?;
                self.expect_sym(")")?;
                with.push(Cte { name, query });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let body = self.select()?;
        for op in ["union", "intersect", "except"] {
            if self.is_kw(op) {
                return Err(self.unsupported(&format!("set operation {}", op.to_ascii_uppercase())));
            }
        }
        let mut order_by = Vec::new();
        if self.eat_kw("order") {
            self.expect_kw("by")?;
            loop {
                let expr = self.expr()?;
                let desc = if self.eat_kw("desc") {
                    true
                } else {
                    self.eat_kw("asc");
                    false
                };
                order_by.push(OrderItem { expr, desc });
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let mut limit = None;
        let mut offset = None;
        loop {
            if limit.is_none() && self.eat_kw("limit") {
                limit = Some(self.unsigned()?);
            } else if offset.is_none() && self.eat_kw("offset") {
                offset = Some(self.unsigned()?);
                self.eat_kw("rows");
            } else {
                break;
            }
        }
        Ok(Query {
            with,
            body,
            order_by,
            limit,
            offset,
        })
    }

    fn select(&mut self) -> Result<Select, ParseDiag> {
        let span = self.span();
        self.expect_kw("select")?;
        let distinct = self.eat_kw("distinct");
        self.eat_kw("all");
        let mut items = Vec::new();
        loop {
            if self.eat_sym("*") {
                items.push(SelectItem::Wildcard);
            } else {
                let expr = self.expr()?;
                let alias = self.alias()?;
                items.push(SelectItem::Expr { expr, alias });
            }
            if !self.eat_sym(",") {
                break;
            }
        }
        let mut from = Vec::new();
        if self.eat_kw("from") {
            loop {
                from.push(self.table_with_joins()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let selection = if self.eat_kw("where") { Some(self.expr()?) } else { None };
        let mut group_by = Vec::new();
        if self.eat_kw("group") {
            self.expect_kw("by")?;
            loop {
                group_by.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        let having = if self.eat_kw("having") { Some(self.expr()?) } else { None };
        Ok(Select {
            distinct,
            items,
            from,
            selection,
            group_by,
            having,
            span,
        })
    }

    fn alias(&mut self) -> Result<Option<String>, ParseDiag> {
        if self.eat_kw("as") {
            return self.ident().map(Some);
        }
        match self.peek() {
            Tok::Ident(w) if !RESERVED.contains(&w.as_str()) => self.ident().map(Some),
            _ => Ok(None),
        }
    }

    fn table_factor(&mut self) -> Result<TableFactor, ParseDiag> {
        if self.is_sym("(") {
            self.bump();
            if !self.is_kw("select") && !self.is_kw("with") {
                return Err(self.unexpected("subquery"));
            }
            let query = self.query()?;
            self.expect_sym(")")?;
            let alias = self
                .alias()?
                .ok_or_else(|| self.unexpected("alias for derived table"))?;
            return Ok(TableFactor::Derived {
                query: Box::new(query),
                alias,
            });
        }
        let name = self.ident()?;
        let alias = self.alias()?;
        Ok(TableFactor::Table { name, alias })
    }

    fn table_with_joins(&mut self) -> Result<FromItem, ParseDiag> {
        let relation = self.table_factor()?;
        let mut joins = Vec::new();
        loop {
            let kind = if self.is_kw("join") {
                self.bump();
                SqlJoinKind::Inner
            } else if self.is_kw("inner") {
                self.bump();
                self.expect_kw("join")?;
                SqlJoinKind::Inner
            } else if self.is_kw("left") {
                self.bump();
                self.eat_kw("outer");
                self.expect_kw("join")?;
                SqlJoinKind::Left
            } else if self.is_kw("right") || self.is_kw("full") {
                let which = if self.is_kw("right") { "RIGHT" } else { "FULL" };
                return Err(self.unsupported(&format!("{which} OUTER JOIN")));
            } else if self.is_kw("cross") {
                return Err(self.unsupported("CROSS JOIN"));
            } else {
                break;
            };
            let relation = self.table_factor()?;
            if self.is_kw("using") {
                return Err(self.unsupported("JOIN ... USING"));
            }
            self.expect_kw("on")?;
            let on = self.expr()?;
            joins.push(JoinClause { kind, relation, on });
        }
        Ok(FromItem { relation, joins })
    }

    pub(crate) fn expr(&mut self) -> Result<SqlExpr, ParseDiag> {
        let mut left = self.and_expr()?;
        while self.eat_kw("or") {
            let right = self.and_expr()?;
            left = bin(BinOp::Or, left, right);
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<SqlExpr, ParseDiag> {
        let mut left = self.not_expr()?;
        while self.eat_kw("and") {
            let right = self.not_expr()?;
            left = bin(BinOp::And, left, right);
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<SqlExpr, ParseDiag> {
        if self.is_kw("not") && !matches!(self.peek_at(1), Tok::Ident(w) if w == "exists") {
            self.bump();
            return Ok(SqlExpr::Not(Box::new(self.not_expr()?)));
        }
        self.predicate()
    }

    fn predicate(&mut self) -> Result<SqlExpr, ParseDiag> {
        let left = self.additive()?;
        let op = match self.peek() {
            Tok::Sym("=") => Some(BinOp::Eq),
            Tok::Sym("<>") | Tok::Sym("!=") => Some(BinOp::NotEq),
            Tok::Sym("<") => Some(BinOp::Lt),
            Tok::Sym("<=") => Some(BinOp::LtEq),
            Tok::Sym(">") => Some(BinOp::Gt),
            Tok::Sym(">=") => Some(BinOp::GtEq),
            _ => None,
        };
        if let Some(op) = op {
            self.bump();
            if self.is_kw("any") || self.is_kw("all") || self.is_kw("some") {
                return Err(self.unsupported("quantified comparison"));
            }
            let right = self.additive()?;
            return Ok(bin(op, left, right));
        }
        if self.is_kw("is") {
            return Err(self.unsupported("IS [NOT] NULL"));
        }
        let negated = if self.is_kw("not")
            && matches!(self.peek_at(1), Tok::Ident(w) if w == "between" || w == "in" || w == "like")
        {
            self.bump();
            true
        } else {
            false
        };
        if self.eat_kw("between") {
            let low = self.additive()?;
            self.expect_kw("and")?;
            let high = self.additive()?;
            return Ok(SqlExpr::Between {
                expr: Box::new(left),
                low: Box::new(low),
                high: Box::new(high),
                negated,
            });
        }
        if self.eat_kw("like") {
            return match self.bump() {
                Tok::Str(pattern) => Ok(SqlExpr::Like {
                    expr: Box::new(left),
                    pattern,
                    negated,
                }),
                _ => {
                    self.pos -= 1;
                    Err(self.unexpected("pattern string"))
                }
            };
        }
        if self.eat_kw("in") {
            self.expect_sym("(")?;
            if self.is_kw("select") || self.is_kw("with") {
                let query = self.query()?;
                self.expect_sym(")")?;
                return Ok(SqlExpr::InSubquery {
                    expr: Box::new(left),
                    query: Box::new(query),
                    negated,
                });
            }
            let mut list = Vec::new();
            loop {
                list.push(self.additive()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
            self.expect_sym(")")?;
            return Ok(SqlExpr::InList {
                expr: Box::new(left),
                list,
                negated,
            });
        }
        if negated {
            return Err(self.unexpected("BETWEEN, IN or LIKE"));
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<SqlExpr, ParseDiag> {
        let mut left = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("+") => BinOp::Add,
                Tok::Sym("-") => BinOp::Sub,
                Tok::Sym("||") => return Err(self.unsupported("string concatenation")),
                _ => break,
            };
            self.bump();
            let right = self.multiplicative()?;
            left = bin(op, left, right);
        }
        Ok(left)
    }

    fn multiplicative(&mut self) -> Result<SqlExpr, ParseDiag> {
        let mut left = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Sym("*") => BinOp::Mul,
                Tok::Sym("/") => BinOp::Div,
                Tok::Sym("%") => BinOp::Mod,
                _ => break,
            };
            self.bump();
            let right = self.unary()?;
            left = bin(op, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<SqlExpr, ParseDiag> {
        if self.eat_sym("-") {
            return Ok(match self.unary()? {
                SqlExpr::Int(v) => SqlExpr::Int(v.wrapping_neg()),
                SqlExpr::Float(v) => SqlExpr::Float(-v),
                e => SqlExpr::Neg(Box::new(e)),
            });
        }
        if self.eat_sym("+") {
            return self.unary();
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<SqlExpr, ParseDiag> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(SqlExpr::Int(v))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(SqlExpr::Float(v))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(SqlExpr::Str(s))
            }
            Tok::Sym("(") => {
                self.bump();
                if self.is_kw("select") || self.is_kw("with") {
                    return Err(self.unsupported("scalar subquery"));
                }
                let e = self.expr()?;
                self.expect_sym(")")?;
                Ok(e)
            }
            Tok::Ident(w) => match w.as_str() {
                "null" => {
                    self.bump();
                    Ok(SqlExpr::Null)
                }
                "true" | "false" => {
                    self.bump();
                    Ok(SqlExpr::Bool(w == "true"))
                }
                "date" if matches!(self.peek_at(1), Tok::Str(_)) => {
                    self.bump();
                    let Tok::Str(s) = self.bump() else { unreachable!() };
                    parse_date_days(&s).map(SqlExpr::Date).ok_or_else(|| {
                        ParseDiag::new(span, DiagCategory::Syntax, format!("invalid date literal '{s}'"))
                    })
                }
                "interval" => {
                    self.bump();
                    let value = match self.bump() {
                        Tok::Str(s) => s.trim().parse::<i64>().ok(),
                        Tok::Int(v) => Some(v),
                        _ => None,
                    }
                    .ok_or_else(|| ParseDiag::new(span, DiagCategory::Syntax, "malformed INTERVAL"))?;
                    let unit = match self.bump() {
                        Tok::Ident(u) if u == "day" => IntervalUnit::Day,
                        Tok::Ident(u) if u == "month" => IntervalUnit::Month,
                        Tok::Ident(u) if u == "year" => IntervalUnit::Year,
                        _ => {
                            self.pos -= 1;
                            return Err(self.unexpected("DAY, MONTH or YEAR"));
                        }
                    };
                    Ok(SqlExpr::Interval { value, unit })
                }
                "case" => Err(self.unsupported("CASE expression")),
                "exists" => Err(self.unsupported("EXISTS subquery")),
                "not" => Err(self.unsupported("NOT EXISTS subquery")),
                "cast" => Err(self.unsupported("CAST")),
                "extract" if matches!(self.peek_at(1), Tok::Sym("(")) => {
                    self.bump();
                    self.bump();
                    let field = self.ident()?;
                    if field != "year" {
                        return Err(ParseDiag::new(
                            span,
                            DiagCategory::Unsupported,
                            format!("EXTRACT({})", field.to_ascii_uppercase()),
                        ));
                    }
                    self.expect_kw("from")?;
                    let e = self.expr()?;
                    self.expect_sym(")")?;
                    Ok(SqlExpr::ExtractYear(Box::new(e)))
                }
                _ if matches!(self.peek_at(1), Tok::Sym("(")) => self.call(),
                _ => {
                    let first = self.ident()?;
                    if self.eat_sym(".") {
                        let name = self.ident()?;
                        Ok(SqlExpr::Column {
                            table: Some(first),
                            name,
                        })
                    } else {
                        Ok(SqlExpr::Column { table: None, name: first })
                    }
                }
            },
            _ => Err(self.unexpected("expression")),
        }
    }

    fn call(&mut self) -> Result<SqlExpr, ParseDiag> {
        let span = self.span();
        let name = match self.bump() {
            Tok::Ident(w) => w,
            _ => unreachable!("call starts with an identifier"),
        };
        self.expect_sym("(")?;
        let mut args = Vec::new();
        let mut star = false;
        if self.eat_kw("distinct") {
            return Err(ParseDiag::new(
                span,
                DiagCategory::Unsupported,
                format!("{}(DISTINCT ...)", name.to_ascii_uppercase()),
            ));
        }
        if self.eat_sym("*") {
            star = true;
        } else if !self.is_sym(")") {
            loop {
                args.push(self.expr()?);
                if !self.eat_sym(",") {
                    break;
                }
            }
        }
        self.expect_sym(")")?;
        if self.is_kw("over") {
            return Err(self.unsupported("window function"));
        }
        let arity = |n: usize| {
            if args.len() == n && !star {
                Ok(())
            } else {
                Err(ParseDiag::new(
                    span,
                    DiagCategory::Syntax,
                    format!("{} takes {n} argument(s)", name.to_ascii_uppercase()),
                ))
            }
        };
        match name.as_str() {
            "count" if star => {}
            "count" | "sum" | "avg" | "min" | "max" | "year" => arity(1)?,
            "mod" => arity(2)?,
            other => {
                return Err(ParseDiag::new(
                    span,
                    DiagCategory::Unsupported,
                    format!("function {}", other.to_ascii_uppercase()),
                ))
            }
        }
        if name == "year" {
            return Ok(SqlExpr::ExtractYear(Box::new(args.remove(0))));
        }
        if name == "mod" {
            let r = args.pop().unwrap_or(SqlExpr::Null);
            let l = args.pop().unwrap_or(SqlExpr::Null);
            return Ok(bin(BinOp::Mod, l, r));
        }
        Ok(SqlExpr::Func { name, args, star })
    }
}

fn bin(op: BinOp, left: SqlExpr, right: SqlExpr) -> SqlExpr {
    SqlExpr::Binary {
        op,
        left: Box::new(left),
        right: Box::new(right),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expr(s: &str) -> SqlExpr {
        let q = parse_query(&format!("SELECT {s}")).unwrap();
        match &q.body.items[0] {
            SelectItem::Expr { expr, .. } => expr.clone(),
            SelectItem::Wildcard => panic!(),
        }
    }

    #[test]
    fn precedence() {
        assert_eq!(expr("1 + 2 * 3").to_string(), "1 + (2 * 3)");
        assert_eq!(expr("a OR b AND NOT c").to_string(), "a OR (b AND (NOT c))");
        assert_eq!(expr("-x - -2").to_string(), "(-x) - (-2)");
        assert_eq!(expr("MOD(id, 5)").to_string(), "id % 5");
    }

    #[test]
    fn predicates() {
        assert_eq!(
            expr("a NOT BETWEEN 1 AND 2").to_string(),
            "a NOT BETWEEN 1 AND 2"
        );
        assert_eq!(expr("t NOT LIKE '%x%'").to_string(), "t NOT LIKE '%x%'");
        assert_eq!(expr("k IN (1, -2)").to_string(), "k IN (1, -2)");
        assert_eq!(
            expr("EXTRACT(YEAR FROM d) >= 2024").to_string(),
            "EXTRACT(YEAR FROM d) >= 2024"
        );
        assert_eq!(expr("DATE '1998-12-01' - INTERVAL '90' DAY").to_string(), "DATE '1998-12-01' - INTERVAL '90' DAY");
    }

    #[test]
    fn unsupported_constructs_are_named() {
        let cases = [
            ("SELECT a FROM t UNION SELECT a FROM u", "set operation UNION"),
            ("SELECT (SELECT 1) FROM t", "scalar subquery"),
            ("SELECT a FROM t RIGHT JOIN u ON t.a = u.a", "RIGHT OUTER JOIN"),
            ("SELECT a FROM t FULL OUTER JOIN u ON t.a = u.a", "FULL OUTER JOIN"),
            ("SELECT SUM(a) OVER () FROM t", "window function"),
            ("SELECT a FROM t WHERE EXISTS (SELECT 1 FROM u)", "EXISTS subquery"),
            ("SELECT COUNT(DISTINCT a) FROM t", "COUNT(DISTINCT ...)"),
            ("SELECT CASE WHEN a THEN 1 END FROM t", "CASE expression"),
        ];
        for (sql, what) in cases {
            let d = parse_query(sql).unwrap_err();
            assert_eq!(d.category, DiagCategory::Unsupported, "{sql}");
            assert_eq!(d.message, what, "{sql}");
        }
    }

    #[test]
    fn syntax_error_position() {
        let d = parse_query("SELECT a\nFROM t WHERE").unwrap_err();
        assert_eq!(d.category, DiagCategory::Syntax);
        assert_eq!((d.span.line, d.span.column), (2, 13));
    }

    #[test]
    fn double_quoted_strings_are_literals() {
        assert_eq!(expr("x = \"Brasil\""), expr("x = 'Brasil'"));
    }
}
