//! Built-in experiment bundles, written in the config language.

pub const NAMES: &[&str] = &["identities", "paper-examples", "full"];

const IDENTITIES: &str = "

[experiment]
op = polynomials
n_max = 20
trials = 500
assert = true

[space]
kind = path
n = 12
[kernel]
kind = srw
[experiment]
op = identities
steps = 10
assert = true
[kernel]
kind = srw
lazy = true
[experiment]
op = identities
steps = 10
assert = true

[space]
kind = cycle
n = 9
[kernel]
kind = srw
lazy = true
[experiment]
op = identities
assert = true

[space]
kind = lattice
dim = 2
side = 6
[kernel]
kind = ball_walk
h = 1
[experiment]
op = identities
assert = true

[space]
kind = tree
degree = 3
depth = 3
[kernel]
kind = srw
[experiment]
op = identities
assert = true

[space]
kind = bipartite
left = 2
right = 3
[kernel]
kind = srw
[experiment]
op = identities
assert = true

[space]
kind = euclidean_radial
dim = 1
alpha = 0.5
window = 3
step = 0.1
[kernel]
kind = ball_walk
h = 0.5
[experiment]
op = identities
steps = 6
assert = true
";

const PAPER_EXAMPLES: &str = "

# broken line: the Poincaré constant is infinite until h exceeds the gap of 1/2
[space]
kind = broken_line
window = 6
step = 0.05
[experiment]
op = poincare
h = 0.3
r = 5
expect = fail
assert = true
[experiment]
op = poincare
h = 0.4
r = 5
expect = fail
assert = true
[experiment]
op = poincare
h = 0.5
r = 5
expect = fail
assert = true
[experiment]
op = poincare
h = 0.6
r = 5
assert = true
[experiment]
op = poincare
h = 0.75
r = 5
assert = true
[experiment]
op = poincare
h = 1
r = 5
assert = true

# bipartite counterexample: the squared form vanishes on f = (1, -1)
[space]
kind = bipartite
left = 1
right = 1
[kernel]
kind = srw
[experiment]
op = forms
f = 1, -1
expect = fail
assert = true
[kernel]
kind = srw
lazy = true
[experiment]
op = forms
f = 1, -1
assert = true

# radial weights (1+x^2)^(alpha/2) on the line
[space]
kind = euclidean_radial
dim = 1
alpha = 0.8
window = 10
step = 0.1
[kernel]
kind = ball_walk
h = 0.5
[experiment]
op = recurrence
n_max = 1000
class = transient
assert = true
[space]
kind = euclidean_radial
dim = 1
alpha = 0
window = 10
step = 0.1
[experiment]
op = recurrence
n_max = 1000
class = recurrent
assert = true
[space]
kind = euclidean_radial
dim = 1
alpha = -0.8
window = 10
step = 0.1
[experiment]
op = recurrence
n_max = 1000
class = recurrent
assert = true

# annulus walk: one step never returns, so the lower compatibility bound fails
[space]
kind = euclidean_radial
dim = 1
alpha = 0
window = 12
step = 0.1
[kernel]
kind = annulus_walk
h = 0.5
h1 = 1
h2 = 2
[experiment]
op = compat
expect = fail
assert = true

# regular tree: exponential volume growth
[space]
kind = tree
degree = 3
depth = 8
[experiment]
op = doubling
radii = 2, 4
expect = fail
assert = true
";

const FULL_EXTRA: &str = "

[space]
kind = lattice
dim = 2
side = 101
[kernel]
kind = ball_walk
h = 1
lazy = true
[experiment]
op = gaussian_fit
n_min = 64
n_max = 256
centers = 5
assert = true
[experiment]
op = on_diagonal
times = 4, 16, 64, 256

[space]
kind = lattice
dim = 2
side = 131
[experiment]
op = elliptic_harnack
r = 16
c = 0.25
trials = 30
doubled = true
assert = true
[experiment]
op = parabolic_harnack
r = 16
eta = 0.25
trials = 20
doubled = true
assert = true

# parity: the non-lazy walk on Z never charges both cylinders
[space]
kind = path
n = 301
[kernel]
kind = srw
[experiment]
op = parabolic_harnack
vertex = 150
r = 24
trials = 2
expect = fail
assert = true

[space]
kind = tree
degree = 3
depth = 12
[experiment]
op = doubling
radii = 1, 2, 3, 4, 5, 6
expect = fail
assert = true
[experiment]
op = tree_profile
degree = 3
times = 16, 36, 64, 100, 144, 196, 256, 324, 400
drop = 10
expect = fail
assert = true
[kernel]
kind = srw
lazy = true
[experiment]
op = on_diagonal
times = 2, 4, 8, 16
";

pub fn text(name: &str) -> Option<String> {
    match name {
        "identities" => Some(format!("seed = 1\n{IDENTITIES}")),
        "paper-examples" => Some(format!("seed = 2\n{PAPER_EXAMPLES}")),
        // Harnack batteries at r = 32 need about 2·10⁹ applications
        "full" => Some(format!("seed = 3\nbudget = 10000000000\n{IDENTITIES}{PAPER_EXAMPLES}{FULL_EXTRA}")),
        _ => None,
    }
}
