class AugKinds:
    SR = "SR"  # synonym replacement
    PD = "PD"  # pervasive (word-level) dropout
    RI = "RI"  # random insertion
    BT = "BT"  # back-translation
    ID = "ID"  # identity
    DS = "DS"  # drop a fraction of tokens, then shuffle

    ALL = (SR, PD, RI, BT, ID, DS)
    ABLATION = (SR, PD, RI, BT)


class CriterionKinds:
    CLASSIFIER = "classifier"
    SCORER = "scorer"

    ALL = (CLASSIFIER, SCORER)


class ClassifierTargets:
    DISTRIBUTION = "distribution"  # -H(p(y|x), p(y|a(x)))
    LABEL = "label"  # -H(y, p(y|a(x)))

    ALL = (DISTRIBUTION, LABEL)


class TrainModes:
    SAT = "sat"
    SUPERVISED = "supervised"
    FIXMATCH = "fixmatch"

    ALL = (SAT, SUPERVISED, FIXMATCH)


class AblationKinds:
    LABELED_SIZE = "labeled_size"
    AUG_COMBO = "aug_combo"

    ALL = (LABELED_SIZE, AUG_COMBO)


class ExitCodes:
    OK = 0
    CONFIG = 1
    DATA = 2
    RUNTIME = 3


PAD_ID = 0
UNK_ID = 1
PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

PROB_FLOOR = 1e-12
