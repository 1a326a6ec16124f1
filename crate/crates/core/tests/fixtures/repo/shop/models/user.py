class User:
    def __init__(self, name, email):
        self.name = name
        self._email = email

    @classmethod
    def from_dict(cls, data):
        return cls(data["name"], data["email"])

    @property
    def email(self):
        return self._email

    @email.setter
    def email(self, value):
        if "@" not in value:
            raise ValueError("invalid email")
        self._email = value
