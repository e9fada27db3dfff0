#pragma once

#include <functional>

#include "fedpgp/matrix.hpp"

namespace fedpgp {

// Temperature softmax over logits/tau, computed with log-sum-exp shifting.
// Output sums to 1 within 1e-12 for any finite logits.
Vector softmax(const Vector& logits, double tau);

// log(softmax(logits, tau)[index]); same stability guarantees.
double log_softmax_at(const Vector& logits, double tau, std::size_t index);

double dot(const Vector& a, const Vector& b);
double norm(const Vector& a);

// Cosine similarity, clamped to [-1, 1] against rounding.
double cosine_sim(const Vector& a, const Vector& b);

// a / ||a||; throws DegenerateVector on zero norm.
Vector normalize(const Vector& a);

// Central-difference gradient of a scalar function of a matrix; the oracle
// every analytic gradient in this project is checked against.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h);

}  // namespace fedpgp
