import base64
import binascii

from rest_framework import serializers

from dht.ident import KEY_BITS, KeyId


class Base64Field(serializers.CharField):
    """Standard base64 text in JSON, ``bytes`` in validated data."""

    def to_internal_value(self, data):
        text = super().to_internal_value(data)
        try:
            return base64.b64decode(text, validate=True)
        except (binascii.Error, ValueError):
            raise serializers.ValidationError("Not valid base64.")

    def to_representation(self, value):
        return base64.b64encode(bytes(value)).decode("ascii")


class KeyIdField(serializers.RegexField):
    def __init__(self, **kwargs):
        super().__init__(r"^[0-9a-f]{128}$", **kwargs)

    def to_internal_value(self, data):
        return KeyId.from_hex(super().to_internal_value(data))

    def to_representation(self, value):
        return bytes(value).hex()


class TargetSerializer(serializers.Serializer):
    target_key = KeyIdField()
    difficulty = serializers.IntegerField(min_value=1, max_value=KEY_BITS)


class DpushSiteSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=["dpush/site"])
    targets = TargetSerializer(many=True, allow_empty=False)
    ext = serializers.DictField(default=dict)


class ChannelEntrySerializer(serializers.Serializer):
    seq = serializers.IntegerField(min_value=1)
    data = Base64Field(allow_blank=True)


class ChannelSerializer(serializers.Serializer):
    kind = serializers.ChoiceField(choices=["dpush/channel"])
    entries = ChannelEntrySerializer(many=True)

    def validate_entries(self, entries):
        seqs = [entry["seq"] for entry in entries]
        if seqs != sorted(set(seqs)):
            raise serializers.ValidationError("Entry sequence numbers must be strictly increasing.")
        return entries
