#ifndef SNELL_EXPR_HPP
#define SNELL_EXPR_HPP

#include <memory>
#include <span>
#include <string>
#include <vector>

namespace snell {

/**
 * Arithmetic expression AST over the variables t, x_1, ..., x_d.
 *
 * Grammar (precedence high to low): ^ (right-assoc), unary -, * /, + -.
 * Functions: exp, log, sqrt, abs (one argument), max, min (two arguments).
 * "x" is accepted as an alias for x_1.
 */
class Expr {
public:
    enum class Kind { Constant, VarT, VarX, Neg, Exp, Log, Sqrt, Abs, Add, Sub, Mul, Div, Pow, Max, Min };

    Kind kind;
    double value = 0.0;  // Constant
    int index = 0;       // VarX: zero-based state component
    std::unique_ptr<Expr> lhs;
    std::unique_ptr<Expr> rhs;  // unused for unary nodes

    double eval(double t, std::span<const double> x) const;

    /// Minimal-parentheses text form; parse(print(e)) reproduces the AST.
    std::string print() const;

    bool equals(const Expr& other) const;

    std::unique_ptr<Expr> clone() const;
};

using ExprPtr = std::unique_ptr<Expr>;

/// Parses src; throws ParseError with the byte offset of the problem.
/// max_state_index guards x_k references (pass the problem dimension).
ExprPtr parse_expr(const std::string& src, int max_state_index = 9);

}  // namespace snell

#endif  // SNELL_EXPR_HPP
