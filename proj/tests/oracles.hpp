/*
 * MIT License
 *
 * Copyright (c) 2026 The emeter authors
 *
 * Permission is hereby granted, free of charge, to any person obtaining a copy
 * of this software and associated documentation files (the "Software"), to deal
 * in the Software without restriction, including without limitation the rights
 * to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
 * copies of the Software, and to permit persons to whom the Software is
 * furnished to do so, subject to the following conditions:
 *
 * The above copyright notice and this permission notice shall be included in all
 * copies or substantial portions of the Software.
 *
 * THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
 * IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
 * FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
 * AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
 * LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
 * OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
 * SOFTWARE.
 */


/*! @file
 * @brief Independent reference computations used to check the library
 */

#pragma once

#include <cmath>
#include <utility>
#include <vector>

namespace emeter::oracle
{

//! exact integral of a step function given as (t_s, watts) knots, each value held until the next knot
inline double stepIntegral(const std::vector<std::pair<double, double>>& knots, double t0, double t1)
{
    double e = 0;
    for (std::size_t i = 0; i < knots.size(); ++i)
    {
        double a = std::max(t0, knots[i].first);
        double b = std::min(t1, i + 1 < knots.size() ? knots[i + 1].first : t1);
        if (b > a) { e += knots[i].second * (b - a); }
    }
    return e;
}

//! closed form of the linear ramp p(t) = p0 + (p1 - p0) t / T over [0, T]
inline double rampIntegral(double p0, double p1, double T) { return 0.5 * (p0 + p1) * T; }

inline double modelPower(double staticW, double dynamicW, double f, double ref, double exponent = 3.0)
{
    return staticW + dynamicW * std::pow(f / ref, exponent);
}

inline double modelTime(double alpha, double base, double f, double ref)
{
    return base * (alpha * ref / f + (1.0 - alpha));
}

//! EDP at f over EDP at ref for one region with constant power
inline double normalizedEdp(double staticW, double dynamicW, double alpha, double f, double ref)
{
    double base = 1.0;
    double e    = modelPower(staticW, dynamicW, f, ref) * modelTime(alpha, base, f, ref);
    double e0   = modelPower(staticW, dynamicW, ref, ref) * base;
    return e * modelTime(alpha, base, f, ref) / (e0 * base);
}

} // namespace emeter::oracle
