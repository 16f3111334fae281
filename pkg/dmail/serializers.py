from rest_framework import serializers

from dht.ident import default_suite
from dpush.serializers import Base64Field, DpushSiteSerializer
from dpushnet.exceptions import InvalidKey

AGREEMENT_PUBLIC_BYTES = 32


class EncryptionSerializer(serializers.Serializer):
    scheme = serializers.CharField(max_length=64)
    ka_pub = Base64Field()

    def validate_ka_pub(self, value):
        if len(value) != AGREEMENT_PUBLIC_BYTES:
            raise serializers.ValidationError(f"Key-agreement public value must be {AGREEMENT_PUBLIC_BYTES} bytes.")
        try:
            default_suite.load_agreement_public(value)
        except InvalidKey as exc:
            raise serializers.ValidationError(str(exc)) from exc
        return value


class DmailSiteSerializer(DpushSiteSerializer):
    kind = serializers.ChoiceField(choices=["dmail/site"])
    enc = EncryptionSerializer()
