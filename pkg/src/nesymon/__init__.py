"""Neuro-symbolic outcome prediction for business process event logs.

Pipeline: parse logs (XES/CSV), derive labeled prefixes, mine candidate
rules (Declare control-flow, temporal SLA thresholds, payload
correlations), compile them into a fuzzy first-order knowledge base, and
train a recurrent classifier whose loss is one minus the aggregated
satisfaction of supervision axioms plus injected rules.  Evaluation
covers accuracy/F1 and a rule-compliance score on a compliance-aware
test set.
"""

__version__ = "0.1.0"
