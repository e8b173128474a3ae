#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "ofsafe/errors.hpp"

namespace ofsafe {

// Arithmetic expression over variables x1..xn with + - * / ^, parentheses,
// unary minus, and the functions sin, cos, exp, ln, abs, sqrt. Parsed once,
// evaluated many times on state vectors.
class Expr {
  public:
    Expr() = default;

    static Expr parse(std::string_view text);

    double eval(std::span<const double> x) const;

    // Highest variable index referenced (0 when constant).
    int max_var() const;

    // Throws ErrorKind::Config when a variable index exceeds n.
    void validate_vars(int n) const;

    const std::string& text() const { return text_; }
    bool empty() const { return root_ == nullptr; }

    struct Node;

  private:
    std::shared_ptr<const Node> root_;
    std::string text_;
};

} // namespace ofsafe
