use super::labels::*;
use super::lexer::{tokenize_minilang, Token, TokenKind};
use super::{Ast, AstError, AstTree, ParseError};

/// Parses a MiniLang token stream into an [`Ast`].
///
/// A program with a single function is rooted at its `FunctionDef`; several
/// functions are grouped under a `Program` root.
pub fn parse_minilang(tokens: &[Token]) -> Result<Ast, ParseError> {
    let mut p = Parser { tokens, pos: 0 };
    let mut funcs = vec![p.funcdef()?];
    while p.peek().is_some() {
        funcs.push(p.funcdef()?);
    }
    let tree = if funcs.len() == 1 {
        funcs.pop().unwrap()
    } else {
        node(PROGRAM, None, funcs)
    };
    Ok(Ast::from_tree(&tree))
}

/// Tokenizes and parses in one step.
pub fn parse_source(source: &str) -> Result<Ast, AstError> {
    let tokens = tokenize_minilang(source)?;
    Ok(parse_minilang(&tokens)?)
}

fn node(label: &str, value: Option<String>, children: Vec<AstTree>) -> AstTree {
    AstTree {
        label: label.to_string(),
        value,
        children,
    }
}

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_at(&self, offset: usize) -> Option<&'t Token> {
        self.tokens.get(self.pos + offset)
    }

    fn at(&self, kind: TokenKind, lexeme: &str) -> bool {
        self.peek().is_some_and(|t| t.is(kind, lexeme))
    }

    fn at_punct(&self, lexeme: &str) -> bool {
        self.at(TokenKind::Punct, lexeme)
    }

    fn error(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(t) => ParseError {
                line: t.line,
                column: t.column,
                message: format!("expected {expected}, found `{}`", t.lexeme),
            },
            None => {
                let (line, column) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.column + t.lexeme.chars().count()))
                    .unwrap_or((1, 1));
                ParseError {
                    line,
                    column,
                    message: format!("expected {expected}, found end of input"),
                }
            }
        }
    }

    fn expect(&mut self, kind: TokenKind, lexeme: &str) -> Result<&'t Token, ParseError> {
        if self.at(kind, lexeme) {
            let t = &self.tokens[self.pos];
            self.pos += 1;
            Ok(t)
        } else {
            Err(self.error(&format!("`{lexeme}`")))
        }
    }

    fn punct(&mut self, lexeme: &str) -> Result<&'t Token, ParseError> {
        self.expect(TokenKind::Punct, lexeme)
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(t) if t.kind == TokenKind::Ident => {
                self.pos += 1;
                Ok(t.lexeme.clone())
            }
            _ => Err(self.error("identifier")),
        }
    }

    fn funcdef(&mut self) -> Result<AstTree, ParseError> {
        self.expect(TokenKind::Keyword, "fn")?;
        let name = self.ident()?;
        self.punct("(")?;
        let mut children = Vec::new();
        if !self.at_punct(")") {
            children.push(node(PARAM, Some(self.ident()?), vec![]));
            while self.at_punct(",") {
                self.pos += 1;
                children.push(node(PARAM, Some(self.ident()?), vec![]));
            }
        }
        self.punct(")")?;
        children.push(self.block()?);
        Ok(node(FUNCTION_DEF, Some(name), children))
    }

    fn block(&mut self) -> Result<AstTree, ParseError> {
        self.punct("{")?;
        let mut stmts = Vec::new();
        while !self.at_punct("}") {
            if self.peek().is_none() {
                return Err(self.error("`}`"));
            }
            stmts.push(self.stmt()?);
        }
        self.pos += 1;
        Ok(node(BLOCK, None, stmts))
    }

    fn stmt(&mut self) -> Result<AstTree, ParseError> {
        let t = self.peek().ok_or_else(|| self.error("statement"))?;
        if t.kind == TokenKind::Keyword {
            match t.lexeme.as_str() {
                "return" => {
                    self.pos += 1;
                    let e = self.expr()?;
                    self.punct(";")?;
                    return Ok(node(RETURN, None, vec![e]));
                }
                "if" => {
                    self.pos += 1;
                    self.punct("(")?;
                    let cond = self.expr()?;
                    self.punct(")")?;
                    let mut children = vec![cond, self.block()?];
                    if self.at(TokenKind::Keyword, "else") {
                        self.pos += 1;
                        children.push(self.block()?);
                    }
                    return Ok(node(IF, None, children));
                }
                "while" => {
                    self.pos += 1;
                    self.punct("(")?;
                    let cond = self.expr()?;
                    self.punct(")")?;
                    let body = self.block()?;
                    return Ok(node(WHILE, None, vec![cond, body]));
                }
                _ => return Err(self.error("statement")),
            }
        }
        let is_assign = t.kind == TokenKind::Ident
            && self.peek_at(1).is_some_and(|n| n.is(TokenKind::Punct, "="));
        let stmt = if is_assign {
            let target = self.ident()?;
            self.pos += 1;
            let e = self.expr()?;
            node(ASSIGN, None, vec![node(NAME, Some(target), vec![]), e])
        } else {
            self.expr()?
        };
        self.punct(";")?;
        Ok(stmt)
    }

    fn expr(&mut self) -> Result<AstTree, ParseError> {
        let mut lhs = self.term()?;
        while self.at_punct("+") || self.at_punct("-") {
            let op = self.tokens[self.pos].lexeme.clone();
            self.pos += 1;
            let rhs = self.term()?;
            lhs = node(BIN_OP, Some(op), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<AstTree, ParseError> {
        let mut lhs = self.factor()?;
        while self.at_punct("*") || self.at_punct("/") {
            let op = self.tokens[self.pos].lexeme.clone();
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = node(BIN_OP, Some(op), vec![lhs, rhs]);
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<AstTree, ParseError> {
        let t = self.peek().ok_or_else(|| self.error("expression"))?;
        match t.kind {
            TokenKind::Number => {
                self.pos += 1;
                Ok(node(NUM, Some(t.lexeme.clone()), vec![]))
            }
            TokenKind::Ident => {
                self.pos += 1;
                let name = node(NAME, Some(t.lexeme.clone()), vec![]);
                if !self.at_punct("(") {
                    return Ok(name);
                }
                self.pos += 1;
                let mut children = vec![name];
                if !self.at_punct(")") {
                    children.push(self.expr()?);
                    while self.at_punct(",") {
                        self.pos += 1;
                        children.push(self.expr()?);
                    }
                }
                self.punct(")")?;
                Ok(node(CALL, None, children))
            }
            TokenKind::Punct if t.lexeme == "(" => {
                self.pos += 1;
                let e = self.expr()?;
                self.punct(")")?;
                Ok(e)
            }
            _ => Err(self.error("expression")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(ast: &Ast) -> Vec<&str> {
        ast.nodes.iter().map(|n| n.label.as_str()).collect()
    }

    fn parse(src: &str) -> Result<Ast, AstError> {
        parse_source(src)
    }

    #[test]
    fn return_constant() {
        let ast = parse("fn f() { return 1; }").unwrap();
        assert_eq!(labels(&ast), ["FunctionDef", "Block", "Return", "Num"]);
        assert_eq!(ast.len(), 4);
        assert_eq!(ast.node(0).value.as_deref(), Some("f"));
        assert_eq!(ast.node(3).value.as_deref(), Some("1"));
    }

    #[test]
    fn top_level_statement_is_rejected() {
        match parse("x = 1") {
            Err(AstError::Parse(e)) => {
                assert_eq!((e.line, e.column), (1, 1));
                assert!(e.message.contains("`fn`"), "{}", e.message);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn assignment_with_binop() {
        let ast = parse("fn f(a) { a = a + 1; }").unwrap();
        assert_eq!(
            labels(&ast),
            ["FunctionDef", "Param", "Block", "Assign", "Name", "BinOp", "Name", "Num"]
        );
        assert_eq!(ast.node(5).value.as_deref(), Some("+"));
        assert_eq!(ast.children(3), &[4, 5]);
        assert_eq!(ast.children(5), &[6, 7]);
    }

    #[test]
    fn precedence_and_parentheses() {
        let ast = parse("fn f() { return (1 + 2) * 3 - 4; }").unwrap();
        // Return(BinOp-(BinOp*(BinOp+(1,2),3),4))
        let ops: Vec<_> = ast
            .nodes
            .iter()
            .filter(|n| n.label == "BinOp")
            .map(|n| n.value.as_deref().unwrap())
            .collect();
        assert_eq!(ops, ["-", "*", "+"]);
    }

    #[test]
    fn control_flow_and_calls() {
        let src = "fn g(n) { while (n) { n = n - 1; } if (n) { log(n, 2); } else { return 0; } }";
        let ast = parse(src).unwrap();
        assert_eq!(
            labels(&ast),
            [
                "FunctionDef", "Param", "Block", "While", "Name", "Block", "Assign", "Name",
                "BinOp", "Name", "Num", "If", "Name", "Block", "Call", "Name", "Name", "Num",
                "Block", "Return", "Num"
            ]
        );
        assert_eq!(ast.children(11).len(), 3);
    }

    #[test]
    fn several_functions_share_a_program_root() {
        let ast = parse("fn a() { return 1; } fn b() { return 2; }").unwrap();
        assert_eq!(ast.node(0).label, "Program");
        assert_eq!(ast.children(0).len(), 2);
    }

    #[test]
    fn missing_semicolon_reports_position() {
        match parse("fn f() {\n  return 1\n}") {
            Err(AstError::Parse(e)) => {
                assert_eq!((e.line, e.column), (3, 1));
                assert!(e.message.contains("`;`"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unterminated_block() {
        match parse("fn f() { return 1;") {
            Err(AstError::Parse(e)) => assert!(e.message.contains("end of input")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_program_is_an_error() {
        assert!(matches!(parse(""), Err(AstError::Parse(_))));
    }
}
