"""
    Simple enum implementation
"""


class Enum:
    def __init__(self, *args):
        self.idx2name = {}
        self.name2idx = {}
        for idx, name in enumerate(args):
            setattr(self, name, idx)
            self.idx2name[idx] = name
            self.name2idx[name] = idx

    def toStr(self, idx):
        return self.idx2name.get(idx, "NOTFOUND")

    def fromStr(self, name):
        return self.name2idx.get(name)

    def names(self):
        return [self.idx2name[idx] for idx in sorted(self.idx2name)]
