"""mslab: a numerical laboratory for matrix microstates.

Subpackages cover complex-matrix primitives (`matrices`), noncommutative
trace-polynomial formulas with quantifiers (`formulas`), moment and free
cumulant bookkeeping (`moments`), ball/unitary optimization (`optimize`),
Monte-Carlo microstate volumes and entropy (`microstates`), orbit distances
(`transport`), Gibbs-measure samplers and the inf-convolution semigroup
(`gibbs`), freeness experiments (`freeness`), and the `mslab` command line
(`cli`).
"""

__version__ = "0.1.0"
