from dataclasses import dataclass, replace

from dht.ident import default_suite
from dpush.site import DpushSite, register_site_kind
from dpushnet.exceptions import UnsupportedScheme

from .serializers import DmailSiteSerializer, EncryptionSerializer

# wrapper scheme id -> scheme name
SCHEMES = {1: "aes-256-gcm"}
SCHEME_IDS = {name: scheme_id for scheme_id, name in SCHEMES.items()}


@register_site_kind
@dataclass(frozen=True)
class DmailSite(DpushSite):
    scheme: str = default_suite.cipher_scheme
    ka_pub: bytes = b""

    kind = "dmail/site"
    serializer_class = DmailSiteSerializer

    def scheme_id(self):
        try:
            return SCHEME_IDS[self.scheme]
        except KeyError:
            raise UnsupportedScheme(f"site asks for {self.scheme!r}; supported: {sorted(SCHEME_IDS)}") from None

    def with_agreement(self, ka_pub):
        return replace(self, ka_pub=bytes(ka_pub))

    def to_dict(self):
        data = super().to_dict()
        data["enc"] = EncryptionSerializer({"scheme": self.scheme, "ka_pub": self.ka_pub}).data
        return data

    @classmethod
    def from_validated(cls, data):
        site = super().from_validated(data)
        return replace(site, scheme=data["enc"]["scheme"], ka_pub=data["enc"]["ka_pub"])
