#pragma once
// Wavepacket observables: center of mass, average quasi-momentum, and
// normalization, both as the half-order expansion in envelope moments and as
// direct quadratures over assembled fields, plus the two-scale averaging
// quadrature that connects the two.

#include <blochpack/field.hpp>

namespace bloch {

// Quadrature of integral f(x) g(x/delta + s/delta^2) dx next to its separated
// limit (integral of f) times (cell mean of g). For smooth decaying f the two
// agree beyond any fixed power of delta; the gap measures the oscillatory
// coupling. The cell mean reads off g's zero Fourier coefficient, so it is
// exact. Requires at least 8 sample points per period of the fastest
// oscillation of g(x/delta) on every axis (ResolutionTooLow).
struct TwoScaleAverage {
    double value = 0.0;
    double separated = 0.0;
};

TwoScaleAverage two_scale_average(const Vec& f_samples, const FieldGridSpec& grid,
                                  const PeriodicPotential& g, double delta, const Vec& s);

// Half-order expansion of the packet observables in envelope moments:
//   N = ||a||^2 + sqrt(eps) [<b,a> + <a,b>]
//   Q = q + sqrt(eps) <a,ya>/N + eps [<b,ya> + <a,yb>]/N + eps A_n(p)
//   P = p + sqrt(eps) <a,(-i d)a>/N + eps [<b,(-i d)a> + <a,(-i d)b>]/N
// with A_n the band's Berry connection in the model's gauge.
struct PacketObservables {
    Vec Q;
    Vec P;
    double N = 0.0;
};

PacketObservables observables_from_ansatz(const PacketState& state, const EnvelopeGrid& env,
                                          const BandModel& model, double epsilon);

// Normalized first moment of |psi|^2 by quadrature. The field must be a
// localized packet: a boundary shadow above 1e-8 raises DomainTooSmall.
Vec position_from_field(const WaveField& field);

// Normalized <psi, -i eps grad psi> by spectral quadrature. This is the raw
// full momentum; it coincides with the quasi-momentum observable only for a
// trivial periodic background. Same localization requirement as the position.
Vec momentum_from_field(const WaveField& field);

// Gap between the integral definitions of (Q, P) evaluated on the assembled
// ansatz (position moment of the synthesized field; pairing against the
// quasi-momentum slot companion) and the moment expansion above. The gap
// collapses super-linearly in eps; N_lhs is the squared field norm entering
// the integral forms.
struct ExpansionResiduals {
    Vec dQ;
    Vec dP;
    double N_lhs = 0.0;
};

ExpansionResiduals expansion_residuals(const BandModel& model, const PacketState& state,
                                       const GaussianEnvelope& a,
                                       const std::optional<EnvelopeGrid>& corrector,
                                       double epsilon, const FieldGridSpec& grid);

}  // namespace bloch
