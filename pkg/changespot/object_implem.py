class Object(object):
    def __str__(self):
        return "Object"

    def __repr__(self):
        return self.__class__.__name__ + "(" + self.__str__() + ")"
