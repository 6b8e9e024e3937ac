""" Understanding task metrics. Predictions and labels are compared as normalized
(stripped, lowercase) strings."""

from sklearn.metrics import f1_score

from ..errors import EmptyList, LengthMismatch

def normalize(values):
    return [str(v).strip().lower() for v in values]

def check_pairs(preds, golds):
    if len(preds) != len(golds):
        raise LengthMismatch(f"{len(preds)} predictions for {len(golds)} labels.")
    if len(golds) == 0:
        raise EmptyList("Cannot score an empty list of predictions.")

def accuracy(preds, golds):
    """Exact match accuracy."""

    check_pairs(preds, golds)
    return sum(p == g for p, g in zip(normalize(preds), normalize(golds))) / len(golds)

def macro_f1(preds, golds, label_space):
    """ Unweighted mean of the per-class F1 over label_space. A prediction outside
    label_space is a miss for its gold class; a class without support or 
    predictions has F1 = 0."""

    check_pairs(preds, golds)
    labels = normalize(label_space)
    return float(f1_score(normalize(golds), normalize(preds), labels=labels, average="macro", zero_division=0))
